//! Independent reference implementations used by the integration tests.
//!
//! Everything here is deliberately naive: explicit dummy matrices solved by
//! SVD, means computed cell by cell. None of it shares code with the library.
#![allow(dead_code)]

use std::collections::BTreeMap;

use didlab::panel::PanelDataset;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Weighted least squares of `y` on `[regressors | dummies of every factor]`
/// by Householder QR; returns the regressor coefficients. The first level of
/// every factor after the first is dropped so the design has full rank.
pub fn dummy_ols(y: &[f64], weights: Option<&[f64]>, factors: &[Vec<usize>], regressors: &[Vec<f64>]) -> Vec<f64> {
    let n = y.len();
    let levels: Vec<usize> = factors.iter().map(|f| f.iter().max().map_or(0, |m| m + 1)).collect();
    let kept: Vec<usize> = levels.iter().enumerate().map(|(j, &l)| if j == 0 { l } else { l - 1 }).collect();
    let cols = regressors.len() + kept.iter().sum::<usize>();
    let mut x = DMatrix::<f64>::zeros(n, cols);
    for (j, r) in regressors.iter().enumerate() {
        for k in 0..n {
            x[(k, j)] = r[k];
        }
    }
    let mut offset = regressors.len();
    for (j, (f, &l)) in factors.iter().zip(&kept).enumerate() {
        let drop = usize::from(j > 0);
        for k in 0..n {
            if f[k] >= drop {
                x[(k, offset + f[k] - drop)] = 1.0;
            }
        }
        offset += l;
    }
    let mut yv = DVector::from_column_slice(y);
    if let Some(w) = weights {
        for k in 0..n {
            let s = w[k].sqrt();
            yv[k] *= s;
            for j in 0..cols {
                x[(k, j)] *= s;
            }
        }
    }
    let qr = x.qr();
    let rhs = qr.q().transpose() * yv;
    let beta = qr.r().solve_upper_triangular(&rhs).expect("full-rank dummy design");
    beta.iter().take(regressors.len()).copied().collect()
}

/// Unit and period index of every row-major cell of a balanced panel.
pub fn unit_period_factors(n: usize, t: usize) -> Vec<Vec<usize>> {
    vec![(0..n * t).map(|k| k / t).collect(), (0..n * t).map(|k| k % t).collect()]
}

/// Treatment indicator as a 0/1 column.
pub fn d_column(panel: &PanelDataset) -> Vec<f64> {
    panel.treated().iter().map(|&d| if d { 1.0 } else { 0.0 }).collect()
}

/// Static TWFE coefficient from the unit-level dummy regression.
pub fn twfe_by_dummies(panel: &PanelDataset) -> f64 {
    let f = unit_period_factors(panel.n_units(), panel.n_periods());
    dummy_ols(panel.outcome(), None, &f, &[d_column(panel)])[0]
}

/// Panel from explicit onsets and an outcome function `(unit, period, onset) -> y`.
pub fn build_panel(onsets: &[Option<u32>], t_max: usize, mut f: impl FnMut(usize, u32, Option<u32>) -> f64) -> PanelDataset {
    let mut y = Vec::with_capacity(onsets.len() * t_max);
    let mut d = Vec::with_capacity(onsets.len() * t_max);
    for (i, &g) in onsets.iter().enumerate() {
        for t in 1..=t_max as u32 {
            y.push(f(i, t, g));
            d.push(g.is_some_and(|g| t >= g));
        }
    }
    PanelDataset::from_parts((1..=onsets.len() as i64).collect(), t_max, y, d).expect("valid panel")
}

/// Random staggered panel: unit effects, period effects, heterogeneous
/// effects by cohort and event time, Gaussian noise. At least one
/// never-treated unit and one unit treated in period `≥ 2` are included.
pub fn random_panel(seed: u64, n: usize, t_max: usize, noise: f64) -> (PanelDataset, Vec<Option<u32>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut onsets: Vec<Option<u32>> = (0..n)
        .map(|_| {
            if rng.random::<f64>() < 0.35 {
                None
            } else {
                Some(rng.random_range(2..=t_max as u32))
            }
        })
        .collect();
    onsets[0] = None;
    onsets[1] = Some(2.max(t_max as u32 / 2));
    let alpha: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let zeta: Vec<f64> = (0..t_max).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let slope = rng.random_range(-0.5..0.5);
    let p = build_panel(&onsets, t_max, |i, t, g| {
        let eff = g.map_or(0.0, |g| {
            if t >= g {
                0.3 + slope * (t - g) as f64 + 0.05 * g as f64
            } else {
                0.0
            }
        });
        let e: f64 = rng.sample(StandardNormal);
        alpha[i] + zeta[t as usize - 1] + eff + noise * e
    });
    (p, onsets)
}

/// `(ȳ_treat,post - ȳ_treat,pre) - (ȳ_ctrl,post - ȳ_ctrl,pre)`.
pub fn did_of_means(panel: &PanelDataset, onset: u32) -> f64 {
    let mut sums = [[0.0; 2]; 2];
    let mut counts = [[0usize; 2]; 2];
    for i in 0..panel.n_units() {
        let g = usize::from(panel.ever_treated(i));
        for t in 1..=panel.n_periods() as u32 {
            let post = usize::from(t >= onset);
            sums[g][post] += panel.y(i, t);
            counts[g][post] += 1;
        }
    }
    let m = |g: usize, p: usize| sums[g][p] / counts[g][p] as f64;
    (m(1, 1) - m(1, 0)) - (m(0, 1) - m(0, 0))
}

/// Cohort-by-period means of a panel, keyed by onset (`None` = never treated).
pub fn cell_means(panel: &PanelDataset) -> BTreeMap<(Option<u32>, u32), f64> {
    let mut acc: BTreeMap<(Option<u32>, u32), (f64, usize)> = BTreeMap::new();
    for i in 0..panel.n_units() {
        let g = panel.cohort(i).onset();
        for t in 1..=panel.n_periods() as u32 {
            let s = acc.entry((g, t)).or_default();
            s.0 += panel.y(i, t);
            s.1 += 1;
        }
    }
    acc.into_iter().map(|(k, (s, c))| (k, s / c as f64)).collect()
}

/// Textbook group-time DiD against never-treated units with base period `g - 1`.
pub fn att_gt_never(panel: &PanelDataset, g: u32, t: u32) -> f64 {
    let m = cell_means(panel);
    let base = g - 1;
    (m[&(Some(g), t)] - m[&(Some(g), base)]) - (m[&(None, t)] - m[&(None, base)])
}

/// Rank-one matrix `u vᵀ` in row-major order.
pub fn rank_one(u: &[f64], v: &[f64]) -> Vec<f64> {
    u.iter().flat_map(|a| v.iter().map(move |b| a * b)).collect()
}

/// Sample mean and unbiased standard deviation.
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}
