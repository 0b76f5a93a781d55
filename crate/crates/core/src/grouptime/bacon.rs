use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{Cohort, CohortMeans, PanelDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ComparisonKind {
    /// A timing group against never-treated units.
    TreatedVsNever,
    /// Earlier-treated group against a later group that is not yet treated.
    EarlyVsLatePre,
    /// Later-treated group against an already-treated earlier group.
    LateVsEarlyPost,
}

impl ComparisonKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ComparisonKind::TreatedVsNever => "treated_vs_never",
            ComparisonKind::EarlyVsLatePre => "early_vs_late_pre",
            ComparisonKind::LateVsEarlyPost => "late_vs_early_post",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaconComparison {
    pub kind: ComparisonKind,
    pub treat_g: u32,
    /// `None` for the never-treated group.
    pub ctrl_g: Option<u32>,
    pub did: f64,
    pub weight: f64,
    /// Uses already-treated units as controls.
    pub forbidden: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaconDecomposition {
    pub comparisons: Vec<BaconComparison>,
    /// `Σ weight · did`, equal to the static TWFE coefficient.
    pub reconstructed: f64,
    pub forbidden_share: f64,
    /// Sum of the closed-form weights before normalization (1 up to round-off).
    pub raw_weight_sum: f64,
}

/// Mean of cohort `k` over periods `lo..=hi`.
fn window_mean(cm: &CohortMeans, k: usize, lo: u32, hi: u32) -> f64 {
    (lo..=hi).map(|t| cm.mean(k, t)).sum::<f64>() / (hi - lo + 1) as f64
}

/// Decomposes the static TWFE coefficient of a balanced panel into all 2×2
/// timing-group comparisons and their variance weights.
///
/// Weights combine the pair's share of units, the within-pair split, and the
/// variance of treatment within the pair's window, all scaled by the variance
/// of the two-way demeaned treatment indicator.
pub fn bacon_decompose(panel: &PanelDataset) -> Result<BaconDecomposition> {
    let cm = panel.cohort_means();
    let t_max = cm.n_periods as u32;
    let n_total: usize = cm.counts.iter().sum();
    let share = |k: usize| cm.counts[k] as f64 / n_total as f64;
    let never = cm.index_of(Cohort::Never);
    // Timing groups treated at some point inside the panel.
    let groups: Vec<(usize, u32)> = cm
        .cohorts
        .iter()
        .enumerate()
        .filter_map(|(k, c)| c.onset().map(|g| (k, g)))
        .collect();
    if groups.is_empty() {
        return Err(Error::NoTreatedCells);
    }
    if groups.len() == 1 && never.is_none() {
        return Err(Error::SingleTimingGroup);
    }
    let dbar = |g: u32| (t_max - g + 1) as f64 / t_max as f64;
    let var_d = demeaned_treatment_variance(&cm);
    if !(var_d > 0.0) {
        return Err(Error::CollinearDesign("treatment has no within variation".into()));
    }

    let mut out = Vec::new();
    if let Some(u) = never {
        let n_u = share(u);
        for &(k, g) in &groups {
            if g == 1 {
                continue;
            }
            let n_k = share(k);
            let n_ku = n_k / (n_k + n_u);
            let d = dbar(g);
            let weight = (n_k + n_u).powi(2) * n_ku * (1.0 - n_ku) * d * (1.0 - d) / var_d;
            let did = window_mean(&cm, k, g, t_max)
                - window_mean(&cm, k, 1, g - 1)
                - (window_mean(&cm, u, g, t_max) - window_mean(&cm, u, 1, g - 1));
            out.push(BaconComparison {
                kind: ComparisonKind::TreatedVsNever,
                treat_g: g,
                ctrl_g: None,
                did,
                weight,
                forbidden: false,
            });
        }
    }
    for (a, &(k, gk)) in groups.iter().enumerate() {
        for &(l, gl) in &groups[a + 1..] {
            // k treated earlier than l.
            let (n_k, n_l) = (share(k), share(l));
            let n_kl = n_k / (n_k + n_l);
            let (dk, dl) = (dbar(gk), dbar(gl));
            let pair = n_kl * (1.0 - n_kl);
            if gk > 1 {
                let w = ((n_k + n_l) * (1.0 - dl)).powi(2) * pair * ((dk - dl) / (1.0 - dl)) * ((1.0 - dk) / (1.0 - dl))
                    / var_d;
                let did = window_mean(&cm, k, gk, gl - 1)
                    - window_mean(&cm, k, 1, gk - 1)
                    - (window_mean(&cm, l, gk, gl - 1) - window_mean(&cm, l, 1, gk - 1));
                out.push(BaconComparison {
                    kind: ComparisonKind::EarlyVsLatePre,
                    treat_g: gk,
                    ctrl_g: Some(gl),
                    did,
                    weight: w,
                    forbidden: false,
                });
            }
            let w = ((n_k + n_l) * dk).powi(2) * pair * (dl / dk) * ((dk - dl) / dk) / var_d;
            let did = window_mean(&cm, l, gl, t_max)
                - window_mean(&cm, l, gk, gl - 1)
                - (window_mean(&cm, k, gl, t_max) - window_mean(&cm, k, gk, gl - 1));
            out.push(BaconComparison {
                kind: ComparisonKind::LateVsEarlyPost,
                treat_g: gl,
                ctrl_g: Some(gk),
                did,
                weight: w,
                forbidden: true,
            });
        }
    }
    let raw_weight_sum: f64 = out.iter().map(|c| c.weight).sum();
    for c in &mut out {
        c.weight /= raw_weight_sum;
    }
    let reconstructed = out.iter().map(|c| c.weight * c.did).sum();
    let forbidden_share = out.iter().filter(|c| c.forbidden).map(|c| c.weight).sum();
    Ok(BaconDecomposition {
        comparisons: out,
        reconstructed,
        forbidden_share,
        raw_weight_sum,
    })
}

/// `(1/NT)·Σ D̃²` for the two-way demeaned treatment of a balanced panel.
fn demeaned_treatment_variance(cm: &CohortMeans) -> f64 {
    let t_max = cm.n_periods as u32;
    let n: f64 = cm.counts.iter().map(|&c| c as f64).sum();
    let d = |c: Cohort, t: u32| if c.onset().is_some_and(|g| t >= g) { 1.0 } else { 0.0 };
    let unit_mean: Vec<f64> = cm
        .cohorts
        .iter()
        .map(|&c| (1..=t_max).map(|t| d(c, t)).sum::<f64>() / t_max as f64)
        .collect();
    let period_mean: Vec<f64> = (1..=t_max)
        .map(|t| {
            cm.cohorts
                .iter()
                .zip(&cm.counts)
                .map(|(&c, &m)| d(c, t) * m as f64)
                .sum::<f64>()
                / n
        })
        .collect();
    let grand = period_mean.iter().sum::<f64>() / t_max as f64;
    let mut acc = 0.0;
    for (k, &c) in cm.cohorts.iter().enumerate() {
        for t in 1..=t_max {
            let r = d(c, t) - unit_mean[k] - period_mean[t as usize - 1] + grand;
            acc += cm.counts[k] as f64 * r * r;
        }
    }
    acc / (n * t_max as f64)
}

/// Writes `kind,treat_g,ctrl_g,did,weight,forbidden`.
pub fn write_bacon_csv<W: Write>(d: &BaconDecomposition, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["kind", "treat_g", "ctrl_g", "did", "weight", "forbidden"])?;
    for c in &d.comparisons {
        wtr.write_record([
            c.kind.as_str().to_string(),
            c.treat_g.to_string(),
            c.ctrl_g.map_or_else(|| "never".to_string(), |g| g.to_string()),
            c.did.to_string(),
            c.weight.to_string(),
            c.forbidden.to_string(),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<bacon csv>", e))?;
    Ok(())
}
