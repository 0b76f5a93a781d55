use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Full parameterization of one simulated design.
///
/// Outcome model: `y_it = α_i + θ·t + ρ·t·D_i + δ_it + ε_it`, with
/// `α_i ~ N(0, σ_α²)`, `ε_it ~ N(0, σ_ε²)`, selection into treatment
/// `P(D_i = 1) = 1 / (1 + exp(-λ·α_i))` and `δ_it` the effect path scaled by
/// `group_ratio` for late-treated units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default = "defaults::n_units")]
    pub n_units: usize,
    #[serde(default = "defaults::n_periods")]
    pub n_periods: usize,
    /// Seed used when the caller does not supply one.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::sigma_eps")]
    pub sigma_eps: f64,
    #[serde(default = "defaults::sigma_alpha")]
    pub sigma_alpha: f64,
    /// Common linear trend per period.
    #[serde(default = "defaults::theta")]
    pub theta: f64,
    /// Extra trend per period for ever-treated units; non-zero breaks parallel trends.
    #[serde(default)]
    pub rho: f64,
    #[serde(default = "defaults::lambda_scale")]
    pub lambda_scale: f64,
    #[serde(default)]
    pub timing: Timing,
    pub effect: EffectSpec,
    #[serde(default)]
    pub anticipation: Anticipation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectSpec {
    #[serde(flatten)]
    pub shape: EffectShape,
    /// Scale of the path: level for steps, slope for trend breaks, peak for humps.
    pub amplitude: f64,
    /// Multiplier on the late-treated group's whole path (1.0 = homogeneous).
    #[serde(default = "defaults::group_ratio")]
    pub group_ratio: f64,
}

/// Shape of the effect path over event time `e ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case")]
pub enum EffectShape {
    /// `β_e = a`.
    Step,
    /// `β_e = a·(e + ramp_origin)`. With `ramp_origin = 0` the onset period
    /// carries no effect and the kink sits exactly at `g`.
    TrendBreak {
        #[serde(default = "defaults::ramp_origin")]
        ramp_origin: f64,
    },
    /// Concave parabola `β_e = a·(1 - ((e - peak_at)/half_width)²)`, optionally
    /// clipped from below at `floor·a`.
    InvertedU {
        #[serde(default = "defaults::peak_at")]
        peak_at: f64,
        #[serde(default = "defaults::half_width")]
        half_width: f64,
        #[serde(default)]
        floor: Option<f64>,
    },
    /// Linear rise to `a` at `e = rise - 1`, then linear decay over `decay` periods:
    /// `β_e = a·(e+1)/rise` for `e < rise`, `a·max(0, 1 - (e-rise+1)/decay)` after.
    RampFade {
        #[serde(default = "defaults::rise")]
        rise: f64,
        #[serde(default = "defaults::duration")]
        decay: f64,
    },
    /// `β_e = a·max(0, 1 - e/duration)`.
    FadeOut {
        #[serde(default = "defaults::duration")]
        duration: f64,
    },
}

/// How first-treatment periods are drawn for treated units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Timing {
    /// `g = round(N(mean, sd²))` clamped to `[2, T-1]`. Units with
    /// `g ≥ late_from` form the late group (default: just above the mean).
    Distributed {
        mean: f64,
        sd: f64,
        #[serde(default)]
        late_from: Option<u32>,
    },
    /// Half of the treated units (in unit order) start at `early`, the rest at `late`.
    TwoTiming { early: u32, late: u32 },
    /// Per-period draws `d_t ~ Bernoulli(1/(1+exp(-λ·Φ((t-mean)/sd))))` and
    /// `g` = first success; units with no success stay untreated.
    Literal {
        mean: f64,
        sd: f64,
        #[serde(default)]
        late_from: Option<u32>,
    },
}

impl Default for Timing {
    fn default() -> Self {
        Timing::Distributed {
            mean: 8.0,
            sd: 2.0,
            late_from: None,
        }
    }
}

impl Timing {
    /// Whether a unit first treated at `g` belongs to the late group.
    pub fn is_late(&self, g: u32) -> bool {
        match *self {
            Timing::Distributed { mean, late_from, .. } | Timing::Literal { mean, late_from, .. } => {
                g >= late_from.unwrap_or(mean.floor() as u32 + 1)
            }
            Timing::TwoTiming { late, .. } => g == late,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Anticipation {
    #[default]
    None,
    /// Outcome drops by `magnitude` in each of the `depth` periods before onset.
    Negative {
        #[serde(default = "defaults::depth")]
        depth: u32,
        magnitude: f64,
    },
}

impl Anticipation {
    pub fn depth(&self) -> u32 {
        match *self {
            Anticipation::None => 0,
            Anticipation::Negative { depth, .. } => depth,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(format!("{}: {msg}", self.name)));
        if self.n_units < 2 {
            return bad(format!("n_units = {} (need ≥ 2)", self.n_units));
        }
        if self.n_periods < 3 {
            return bad(format!("n_periods = {} (need ≥ 3)", self.n_periods));
        }
        if !(self.sigma_eps > 0.0 && self.sigma_alpha > 0.0) {
            return bad("sigma_eps and sigma_alpha must be positive".into());
        }
        if !(self.effect.amplitude >= 0.0) || !self.effect.amplitude.is_finite() {
            return bad("amplitude must be a non-negative number".into());
        }
        if !(self.effect.group_ratio > 0.0 && self.effect.group_ratio <= 1.0) {
            return bad("group_ratio must lie in (0, 1]".into());
        }
        if ![self.theta, self.rho, self.lambda_scale].iter().all(|v| v.is_finite()) {
            return bad("theta, rho and lambda_scale must be finite".into());
        }
        match self.timing {
            Timing::TwoTiming { early, late } => {
                if !(early >= 1 && early < late && late as usize <= self.n_periods) {
                    return bad(format!("two-timing requires 1 ≤ early < late ≤ T, got {early}, {late}"));
                }
            }
            Timing::Distributed { sd, .. } | Timing::Literal { sd, .. } => {
                if !(sd > 0.0) {
                    return bad("timing sd must be positive".into());
                }
            }
        }
        match self.effect.shape {
            EffectShape::InvertedU { half_width, .. } if !(half_width > 0.0) => {
                return bad("half_width must be positive".into())
            }
            EffectShape::RampFade { rise, decay } if !(rise >= 1.0 && decay > 0.0) => {
                return bad("ramp-fade needs rise ≥ 1 and decay > 0".into())
            }
            EffectShape::FadeOut { duration } if !(duration > 0.0) => {
                return bad("duration must be positive".into())
            }
            _ => {}
        }
        if let Anticipation::Negative { depth, magnitude } = self.anticipation {
            if depth == 0 || !magnitude.is_finite() {
                return bad("anticipation needs depth ≥ 1 and a finite magnitude".into());
            }
        }
        Ok(())
    }
}

mod defaults {
    pub fn n_units() -> usize {
        2000
    }
    pub fn n_periods() -> usize {
        15
    }
    pub fn sigma_eps() -> f64 {
        0.2
    }
    pub fn sigma_alpha() -> f64 {
        1.0
    }
    pub fn theta() -> f64 {
        0.2
    }
    pub fn lambda_scale() -> f64 {
        5.0
    }
    pub fn group_ratio() -> f64 {
        1.0
    }
    pub fn ramp_origin() -> f64 {
        1.0
    }
    pub fn peak_at() -> f64 {
        2.0
    }
    pub fn half_width() -> f64 {
        5.0
    }
    pub fn rise() -> f64 {
        4.0
    }
    pub fn duration() -> f64 {
        5.0
    }
    pub fn depth() -> u32 {
        2
    }
}
