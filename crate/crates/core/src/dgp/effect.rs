use super::config::{Anticipation, EffectShape};

/// True effect by event time for an early-group (unscaled) unit.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectPath {
    /// Entry `k` holds `β_{-(k+1)}`.
    lead: Vec<f64>,
    /// Entry `e` holds `β_e`.
    post: Vec<f64>,
}

impl EffectPath {
    pub fn value(&self, e: i32) -> f64 {
        if e >= 0 {
            self.post.get(e as usize).copied().unwrap_or(0.0)
        } else {
            self.lead.get((-e - 1) as usize).copied().unwrap_or(0.0)
        }
    }

    /// Largest event time with a stored value.
    pub fn max_event_time(&self) -> i32 {
        self.post.len() as i32 - 1
    }

    pub fn anticipation_depth(&self) -> i32 {
        self.lead.len() as i32
    }
}

/// Tabulates `β_e` for `e ∈ [-depth, T-1]`.
pub fn build_effect_path(
    shape: EffectShape,
    amplitude: f64,
    anticipation: Anticipation,
    n_periods: usize,
) -> EffectPath {
    let post = (0..n_periods)
        .map(|e| shape_value(shape, amplitude, e as f64))
        .collect();
    let lead = match anticipation {
        Anticipation::None => Vec::new(),
        Anticipation::Negative { depth, magnitude } => vec![-magnitude; depth as usize],
    };
    EffectPath { lead, post }
}

fn shape_value(shape: EffectShape, a: f64, e: f64) -> f64 {
    match shape {
        EffectShape::Step => a,
        EffectShape::TrendBreak { ramp_origin } => a * (e + ramp_origin),
        EffectShape::InvertedU {
            peak_at,
            half_width,
            floor,
        } => {
            let z = (e - peak_at) / half_width;
            let v = 1.0 - z * z;
            a * floor.map_or(v, |f| v.max(f))
        }
        EffectShape::RampFade { rise, decay } => {
            if e < rise {
                a * (e + 1.0) / rise
            } else {
                a * (1.0 - (e - rise + 1.0) / decay).max(0.0)
            }
        }
        EffectShape::FadeOut { duration } => a * (1.0 - e / duration).max(0.0),
    }
}
