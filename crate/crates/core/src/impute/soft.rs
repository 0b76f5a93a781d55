use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::control::{
    event_curve, fit_two_way, overall, pre_period_residuals, treated_residuals, CellEffects, ObservationMask,
};
use crate::error::{Error, Result};
use crate::estimate::{Estimate, EventStudyCurve};
use crate::panel::PanelDataset;

/// Penalty values to search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LambdaGrid {
    /// `points` log-spaced values from `λ_max` down to `λ_max / ratio`.
    Auto { points: usize, ratio: f64 },
    /// Explicit values, searched in descending order.
    Explicit { values: Vec<f64> },
}

/// Matrix-completion settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub lambda_grid: LambdaGrid,
    pub folds: usize,
    /// Stop when the relative objective decrease of a sweep falls below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Unpenalized unit and period effects alongside the low-rank term.
    pub fixed_effects: bool,
    /// Seed for the fold assignment.
    pub cv_seed: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            lambda_grid: LambdaGrid::Auto {
                points: 50,
                ratio: 1000.0,
            },
            folds: 5,
            tol: 1e-6,
            max_iter: 5000,
            fixed_effects: true,
            cv_seed: 0,
        }
    }
}

impl McConfig {
    /// Lighter search used inside Monte Carlo loops.
    pub fn bench() -> Self {
        McConfig {
            lambda_grid: LambdaGrid::Auto {
                points: 15,
                ratio: 1000.0,
            },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::InvalidConfig("matrix completion needs at least 2 folds".into()));
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::InvalidConfig("tol must be positive and max_iter non-zero".into()));
        }
        match &self.lambda_grid {
            LambdaGrid::Auto { points, ratio } if *points == 0 || !(*ratio >= 1.0) => {
                Err(Error::InvalidConfig("auto grid needs points ≥ 1 and ratio ≥ 1".into()))
            }
            LambdaGrid::Explicit { values } if values.is_empty() || values.iter().any(|v| !(*v > 0.0)) => {
                Err(Error::InvalidConfig("lambda grid must be non-empty and strictly positive".into()))
            }
            _ => Ok(()),
        }
    }

    /// Descending grid for the data at hand.
    pub fn grid(&self, lambda_max: f64) -> Vec<f64> {
        match &self.lambda_grid {
            LambdaGrid::Explicit { values } => {
                let mut v = values.clone();
                v.sort_by(|a, b| b.total_cmp(a));
                v.dedup();
                v
            }
            LambdaGrid::Auto { points, ratio } => {
                if *points == 1 {
                    return vec![lambda_max];
                }
                let step = ratio.ln() / (*points - 1) as f64;
                (0..*points).map(|k| lambda_max * (-(k as f64) * step).exp()).collect()
            }
        }
    }
}

/// Result of one soft-impute solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftImputeFit {
    /// `N × T` low-rank component.
    pub low_rank: DMatrix<f64>,
    pub alpha: Vec<f64>,
    pub zeta: Vec<f64>,
    pub lambda: f64,
    /// Objective after every sweep, starting with the initial point.
    pub objective_trace: Vec<f64>,
    pub nuclear_norm: f64,
}

impl SoftImputeFit {
    pub fn predict(&self, i: usize, t: usize) -> f64 {
        self.low_rank[(i, t)] + self.alpha[i] + self.zeta[t]
    }

    pub fn iterations(&self) -> usize {
        self.objective_trace.len() - 1
    }
}

/// Singular-value soft-thresholding `Z ↦ U·max(Σ - τ, 0)·V'`.
///
/// Works through the `T × T` Gram matrix, which is cheap for tall panels.
/// Returns the thresholded matrix and its nuclear norm.
pub fn svt(z: &DMatrix<f64>, tau: f64) -> (DMatrix<f64>, f64) {
    let gram = z.transpose() * z;
    let eig = SymmetricEigen::new(gram);
    let t = z.ncols();
    let mut shrink = DMatrix::<f64>::zeros(t, t);
    let mut nuclear = 0.0;
    let top = eig.eigenvalues.max().max(0.0);
    for k in 0..t {
        let s = eig.eigenvalues[k].max(0.0).sqrt();
        // Directions at round-off level carry no signal.
        if s <= tau || s * s <= top * 1e-26 {
            continue;
        }
        nuclear += s - tau;
        let v = eig.eigenvectors.column(k);
        shrink += (v * v.transpose()) * ((s - tau) / s);
    }
    (z * shrink, nuclear)
}

/// Largest singular value.
pub(crate) fn spectral_norm(z: &DMatrix<f64>) -> f64 {
    let gram = z.transpose() * z;
    SymmetricEigen::new(gram).eigenvalues.max().max(0.0).sqrt()
}

fn to_matrix(y: &[f64], n: usize, t: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(n, t, y)
}

struct Problem<'a> {
    y: &'a DMatrix<f64>,
    mask: &'a ObservationMask,
    n_obs: f64,
    unit_obs: Vec<f64>,
    period_obs: Vec<f64>,
}

impl<'a> Problem<'a> {
    fn new(y: &'a DMatrix<f64>, mask: &'a ObservationMask) -> Self {
        let (n, t_max) = (mask.n_units(), mask.n_periods());
        let mut unit_obs = vec![0.0; n];
        let mut period_obs = vec![0.0; t_max];
        for i in 0..n {
            for t in 0..t_max {
                if mask.is_observed(i, t) {
                    unit_obs[i] += 1.0;
                    period_obs[t] += 1.0;
                }
            }
        }
        Problem {
            y,
            mask,
            n_obs: mask.count() as f64,
            unit_obs,
            period_obs,
        }
    }

    fn loss(&self, l: &DMatrix<f64>, alpha: &[f64], zeta: &[f64]) -> f64 {
        let mut sse = 0.0;
        for t in 0..self.mask.n_periods() {
            for i in 0..self.mask.n_units() {
                if self.mask.is_observed(i, t) {
                    let r = self.y[(i, t)] - l[(i, t)] - alpha[i] - zeta[t];
                    sse += r * r;
                }
            }
        }
        sse / self.n_obs
    }

    /// Exact minimization over `(α, ζ)` for fixed `L` by alternating the two
    /// closed-form block updates; each update can only lower the loss.
    fn update_effects(&self, l: &DMatrix<f64>, alpha: &mut [f64], zeta: &mut [f64]) -> Result<()> {
        let (n, t_max) = (self.mask.n_units(), self.mask.n_periods());
        for _ in 0..10_000 {
            let mut change = 0.0_f64;
            let mut sums = vec![0.0; n];
            for t in 0..t_max {
                for i in 0..n {
                    if self.mask.is_observed(i, t) {
                        sums[i] += self.y[(i, t)] - l[(i, t)] - zeta[t];
                    }
                }
            }
            for i in 0..n {
                let a = sums[i] / self.unit_obs[i];
                change = change.max((a - alpha[i]).abs());
                alpha[i] = a;
            }
            let mut sums = vec![0.0; t_max];
            for t in 0..t_max {
                for i in 0..n {
                    if self.mask.is_observed(i, t) {
                        sums[t] += self.y[(i, t)] - l[(i, t)] - alpha[i];
                    }
                }
            }
            for t in 0..t_max {
                let z = sums[t] / self.period_obs[t];
                change = change.max((z - zeta[t]).abs());
                zeta[t] = z;
            }
            if change < 1e-12 {
                let shift = zeta.iter().sum::<f64>() / t_max as f64;
                zeta.iter_mut().for_each(|z| *z -= shift);
                alpha.iter_mut().for_each(|a| *a += shift);
                return Ok(());
            }
        }
        Err(Error::NoConvergence(10_000))
    }

    /// `P_O(y - α - ζ) + P_O⊥(L)`.
    fn filled(&self, l: &DMatrix<f64>, alpha: &[f64], zeta: &[f64]) -> DMatrix<f64> {
        let (n, t_max) = (self.mask.n_units(), self.mask.n_periods());
        DMatrix::from_fn(n, t_max, |i, t| {
            if self.mask.is_observed(i, t) {
                self.y[(i, t)] - alpha[i] - zeta[t]
            } else {
                l[(i, t)]
            }
        })
    }
}

/// Warm-start state for [`soft_impute`].
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub low_rank: DMatrix<f64>,
    pub alpha: Vec<f64>,
    pub zeta: Vec<f64>,
}

impl From<&SoftImputeFit> for WarmStart {
    fn from(f: &SoftImputeFit) -> Self {
        WarmStart {
            low_rank: f.low_rank.clone(),
            alpha: f.alpha.clone(),
            zeta: f.zeta.clone(),
        }
    }
}

/// Minimizes `(1/|O|)·Σ_O (y - L - α_i - ζ_t)² + λ·‖L‖_*` over `L` and,
/// when enabled, unpenalized `α`, `ζ`.
///
/// Each sweep minimizes exactly over the fixed effects, then applies one
/// majorize-minimize step in `L` (soft-thresholding the matrix whose missing
/// cells are filled from the current fit), so the objective never increases.
pub fn soft_impute(
    y: &[f64],
    mask: &ObservationMask,
    lambda: f64,
    cfg: &McConfig,
    warm: Option<&WarmStart>,
) -> Result<SoftImputeFit> {
    let (n, t_max) = (mask.n_units(), mask.n_periods());
    if y.len() != n * t_max {
        return Err(Error::InvalidConfig("outcome matrix does not match the mask".into()));
    }
    if !y.iter().all(|v| v.is_finite()) || !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::NonFiniteInput("soft-impute input"));
    }
    if cfg.fixed_effects {
        if let (Some(_), _) | (_, Some(_)) = mask.coverage_gap() {
            return Err(Error::CollinearDesign("fixed effects need every unit and period observed".into()));
        }
    }
    let ym = to_matrix(y, n, t_max);
    let prob = Problem::new(&ym, mask);
    let (mut l, mut alpha, mut zeta) = match warm {
        Some(w) => (w.low_rank.clone(), w.alpha.clone(), w.zeta.clone()),
        None => (DMatrix::zeros(n, t_max), vec![0.0; n], vec![0.0; t_max]),
    };
    let tau = lambda * prob.n_obs / 2.0;
    let mut nuclear = if warm.is_some() { nuclear_norm(&l) } else { 0.0 };
    let mut trace = vec![prob.loss(&l, &alpha, &zeta) + lambda * nuclear];
    for _ in 0..cfg.max_iter {
        if cfg.fixed_effects {
            prob.update_effects(&l, &mut alpha, &mut zeta)?;
        }
        let (next, nn) = svt(&prob.filled(&l, &alpha, &zeta), tau);
        l = next;
        nuclear = nn;
        let obj = prob.loss(&l, &alpha, &zeta) + lambda * nuclear;
        let prev = *trace.last().unwrap();
        trace.push(obj);
        if prev - obj <= cfg.tol * prev.abs().max(f64::MIN_POSITIVE) {
            return Ok(SoftImputeFit {
                low_rank: l,
                alpha,
                zeta,
                lambda,
                objective_trace: trace,
                nuclear_norm: nuclear,
            });
        }
    }
    Err(Error::NoConvergence(cfg.max_iter))
}

fn nuclear_norm(l: &DMatrix<f64>) -> f64 {
    let gram = l.transpose() * l;
    SymmetricEigen::new(gram).eigenvalues.iter().map(|v| v.max(0.0).sqrt()).sum()
}

/// Smallest `λ` at which the soft-impute solution has `L = 0`.
pub fn lambda_max(y: &[f64], mask: &ObservationMask, fixed_effects: bool) -> Result<f64> {
    let (n, t_max) = (mask.n_units(), mask.n_periods());
    let (alpha, zeta) = if fixed_effects {
        fit_two_way(y, mask)?
    } else {
        (vec![0.0; n], vec![0.0; t_max])
    };
    let resid = DMatrix::from_fn(n, t_max, |i, t| {
        if mask.is_observed(i, t) {
            y[i * t_max + t] - alpha[i] - zeta[t]
        } else {
            0.0
        }
    });
    Ok(2.0 * spectral_norm(&resid) / mask.count() as f64)
}

/// K-fold cross-validation of the penalty over O.
///
/// Held-out cells whose unit or period would be left without training cells
/// stay in training. The grid is fitted in descending order with warm starts.
pub fn cross_validate_lambda<R: Rng + ?Sized>(
    y: &[f64],
    mask: &ObservationMask,
    cfg: &McConfig,
    rng: &mut R,
) -> Result<f64> {
    cfg.validate()?;
    let grid = cfg.grid(lambda_max(y, mask, cfg.fixed_effects)?);
    if grid.len() == 1 {
        return Ok(grid[0]);
    }
    let (n, t_max) = (mask.n_units(), mask.n_periods());
    let mut cells: Vec<usize> = (0..n * t_max).filter(|&c| mask.as_slice()[c]).collect();
    if cfg.folds > cells.len() {
        return Err(Error::InvalidConfig("more folds than observed cells".into()));
    }
    cells.shuffle(rng);

    let mut mse = vec![0.0; grid.len()];
    for fold in 0..cfg.folds {
        let mut train = mask.as_slice().to_vec();
        let mut unit_left = vec![0usize; n];
        let mut period_left = vec![0usize; t_max];
        for &c in &cells {
            unit_left[c / t_max] += 1;
            period_left[c % t_max] += 1;
        }
        let mut held = Vec::new();
        for (pos, &c) in cells.iter().enumerate() {
            if pos % cfg.folds != fold {
                continue;
            }
            let (i, t) = (c / t_max, c % t_max);
            if unit_left[i] > 1 && period_left[t] > 1 {
                unit_left[i] -= 1;
                period_left[t] -= 1;
                train[c] = false;
                held.push(c);
            }
        }
        if held.is_empty() {
            continue;
        }
        let train_mask = ObservationMask::new(n, t_max, train)?;
        let mut warm: Option<WarmStart> = None;
        for (k, &lambda) in grid.iter().enumerate() {
            let fit = soft_impute(y, &train_mask, lambda, cfg, warm.as_ref())?;
            let err: f64 = held
                .iter()
                .map(|&c| {
                    let r = y[c] - fit.predict(c / t_max, c % t_max);
                    r * r
                })
                .sum::<f64>()
                / held.len() as f64;
            mse[k] += err / cfg.folds as f64;
            warm = Some(WarmStart::from(&fit));
        }
    }
    let best = mse
        .iter()
        .enumerate()
        .fold(0, |b, (k, &v)| if v < mse[b] { k } else { b });
    Ok(grid[best])
}

/// Matrix-completion estimator output.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixCompletion {
    pub effects: CellEffects,
    pub overall: Estimate,
    /// Post-treatment means by event time plus in-sample pre-period residuals.
    pub curve: EventStudyCurve,
    pub lambda_star: f64,
    pub fit: SoftImputeFit,
}

/// Cross-validates `λ`, refits on all of O along the grid down to `λ*`, and
/// imputes `Y_it(0) = L_it + α_i + ζ_t` on treated cells.
pub fn mc_effects(panel: &PanelDataset, cfg: &McConfig, max_lead: u32) -> Result<MatrixCompletion> {
    cfg.validate()?;
    let mask = ObservationMask::untreated(panel)?;
    match mask.coverage_gap() {
        (Some(i), _) => return Err(Error::UnidentifiedUnit(panel.units()[i])),
        (_, Some(t)) => return Err(Error::UnidentifiedPeriod(t as i64 + 1)),
        _ => {}
    }
    if panel.n_treated_cells() == 0 {
        return Err(Error::NoTreatedCells);
    }
    let y = panel.outcome();
    let mut rng = crate::dgp::stream_rng(cfg.cv_seed, 0);
    let lambda_star = cross_validate_lambda(y, &mask, cfg, &mut rng)?;
    let grid = cfg.grid(lambda_max(y, &mask, cfg.fixed_effects)?);
    let mut warm: Option<WarmStart> = None;
    let mut fit = None;
    for &lambda in grid.iter().filter(|&&l| l > lambda_star).chain(std::iter::once(&lambda_star)) {
        let f = soft_impute(y, &mask, lambda, cfg, warm.as_ref())?;
        warm = Some(WarmStart::from(&f));
        fit = Some(f);
    }
    let fit = fit.expect("grid is non-empty");
    let effects = treated_residuals(panel, "mc", |i, t| fit.predict(i, t));
    let mut curve = event_curve(&effects);
    for (e, v) in pre_period_residuals(panel, max_lead, |i, t| fit.predict(i, t)) {
        curve.insert_in_sample(e, v);
    }
    Ok(MatrixCompletion {
        overall: overall(&effects),
        effects,
        curve,
        lambda_star,
        fit,
    })
}
