use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::estimate::EventStudyCurve;

/// Placebo summary for one estimator across replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrendSummary {
    pub estimator: String,
    /// Average over pre-treatment event times of the across-replication mean.
    pub mean_pre: Option<f64>,
    pub max_abs_pre: Option<f64>,
    /// Some `e < -1` has a mean more than `3` Monte Carlo standard errors from zero.
    pub flagged: bool,
    pub flagged_at: Vec<i32>,
    /// Pre-treatment event times with at least one estimate.
    pub n_points: usize,
}

/// Flag threshold in Monte Carlo standard errors.
pub const PRETREND_Z: f64 = 3.0;

/// Summarizes pre-treatment points (`min_e ≤ e < 0`, reference periods
/// excluded) across replications for every estimator.
///
/// Estimators without pre-treatment points get an empty, unflagged summary.
pub fn pretrend_report(curves: &BTreeMap<String, Vec<EventStudyCurve>>, min_e: i32) -> Vec<PretrendSummary> {
    curves
        .iter()
        .map(|(name, reps)| {
            let mut by_e: BTreeMap<i32, Vec<f64>> = BTreeMap::new();
            for c in reps {
                for (&e, p) in &c.points {
                    if e < 0 && e >= min_e && !c.reference.contains(&e) {
                        by_e.entry(e).or_default().push(p.estimate);
                    }
                }
            }
            let mut means = Vec::new();
            let mut flagged_at = Vec::new();
            for (&e, xs) in &by_e {
                let n = xs.len() as f64;
                let mean = xs.iter().sum::<f64>() / n;
                means.push(mean);
                if e < -1 && xs.len() > 1 {
                    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
                    let se = (var / n).sqrt();
                    if mean.abs() > PRETREND_Z * se {
                        flagged_at.push(e);
                    }
                }
            }
            PretrendSummary {
                estimator: name.clone(),
                mean_pre: (!means.is_empty()).then(|| means.iter().sum::<f64>() / means.len() as f64),
                max_abs_pre: means.iter().map(|m| m.abs()).reduce(f64::max),
                flagged: !flagged_at.is_empty(),
                flagged_at,
                n_points: by_e.len(),
            }
        })
        .collect()
}
