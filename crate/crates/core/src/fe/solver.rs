use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Default stopping rule for the alternating projections.
pub const DEMEAN_TOL: f64 = 1e-10;
pub const DEMEAN_MAX_ITER: usize = 10_000;

/// Weighted least squares with high-dimensional categorical factors.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionProblem {
    pub response: Vec<f64>,
    /// Observation weights; `None` means unit weights.
    pub weights: Option<Vec<f64>>,
    /// Each factor maps observation `k` to a level index in `0..levels`.
    pub absorbed: Vec<Vec<usize>>,
    /// Regressor columns, each of the response's length.
    pub regressors: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub coefficients: Vec<f64>,
    /// Full alternating-projection passes performed.
    pub sweeps: usize,
}

/// Projects the absorbed factors out of the response and every regressor,
/// then solves the normal equations of the demeaned system.
///
/// By Frisch-Waugh-Lovell the result equals the regressor block of the full
/// dummy-variable regression.
pub fn absorb_and_solve(p: &RegressionProblem, tol: f64, max_iter: usize) -> Result<Solution> {
    let n = p.response.len();
    let k = p.regressors.len();
    if p.regressors.iter().any(|c| c.len() != n) || p.absorbed.iter().any(|f| f.len() != n) {
        return Err(Error::InvalidConfig("regression columns differ in length".into()));
    }
    let ones;
    let w: &[f64] = match &p.weights {
        Some(w) if w.len() == n => w,
        Some(_) => return Err(Error::InvalidConfig("weight vector has the wrong length".into())),
        None => {
            ones = vec![1.0; n];
            &ones
        }
    };
    if !p.response.iter().chain(p.regressors.iter().flatten()).all(|v| v.is_finite()) {
        return Err(Error::NonFiniteInput("regression problem"));
    }

    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(k + 1);
    columns.push(p.response.clone());
    columns.extend(p.regressors.iter().cloned());
    let raw_norms: Vec<f64> = columns.iter().map(|c| weighted_dot(w, c, c)).collect();
    let demeaner = Demeaner::new(&p.absorbed, w);
    let sweeps = demeaner.demean(&mut columns, tol, max_iter)?;

    let mut xtx = DMatrix::<f64>::zeros(k, k);
    let mut xty = DVector::<f64>::zeros(k);
    for a in 0..k {
        xty[a] = weighted_dot(w, &columns[a + 1], &columns[0]);
        for b in 0..=a {
            let v = weighted_dot(w, &columns[a + 1], &columns[b + 1]);
            xtx[(a, b)] = v;
            xtx[(b, a)] = v;
        }
    }
    for a in 0..k {
        if !(xtx[(a, a)] > 1e-12 * raw_norms[a + 1].max(f64::MIN_POSITIVE)) {
            return Err(Error::CollinearDesign(format!("regressor {a} is absorbed by the fixed effects")));
        }
    }
    if k == 0 {
        return Ok(Solution {
            coefficients: Vec::new(),
            sweeps,
        });
    }

    // Unit-diagonal scaling makes the eigenvalue test scale-free.
    let scale: Vec<f64> = (0..k).map(|a| xtx[(a, a)].sqrt()).collect();
    let scaled = DMatrix::from_fn(k, k, |a, b| xtx[(a, b)] / (scale[a] * scale[b]));
    let eig = SymmetricEigen::new(scaled.clone());
    let min_eig = eig.eigenvalues.min();
    if min_eig < 1e-10 {
        return Err(Error::CollinearDesign(format!(
            "smallest scaled eigenvalue of X'X is {min_eig:.3e}"
        )));
    }
    let rhs = DVector::from_fn(k, |a, _| xty[a] / scale[a]);
    let z = match scaled.cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => return Err(Error::CollinearDesign("X'X is not positive definite".into())),
    };
    let coefficients = (0..k).map(|a| z[a] / scale[a]).collect();
    Ok(Solution { coefficients, sweeps })
}

fn weighted_dot(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    w.iter().zip(a).zip(b).map(|((w, a), b)| w * a * b).sum()
}

/// Weighted alternating projections onto the orthogonal complement of the
/// factor indicator spaces.
struct Demeaner<'a> {
    factors: &'a [Vec<usize>],
    weights: &'a [f64],
    level_weight: Vec<Vec<f64>>,
}

impl<'a> Demeaner<'a> {
    fn new(factors: &'a [Vec<usize>], weights: &'a [f64]) -> Self {
        let level_weight = factors
            .iter()
            .map(|f| {
                let levels = f.iter().copied().max().map_or(0, |m| m + 1);
                let mut lw = vec![0.0; levels];
                for (&l, &wk) in f.iter().zip(weights) {
                    lw[l] += wk;
                }
                lw
            })
            .collect();
        Demeaner {
            factors,
            weights,
            level_weight,
        }
    }

    /// Demeans every column in place; returns the number of sweeps.
    fn demean(&self, columns: &mut [Vec<f64>], tol: f64, max_iter: usize) -> Result<usize> {
        if self.factors.is_empty() {
            return Ok(0);
        }
        let mut worst = 0;
        for col in columns.iter_mut() {
            let mut sweeps = 0;
            let mut last = f64::INFINITY;
            loop {
                if sweeps == max_iter {
                    return Err(Error::NoConvergence(max_iter));
                }
                sweeps += 1;
                let change = self.sweep(col);
                // A single projection is idempotent, so one pass is exact.
                if self.factors.len() == 1 {
                    break;
                }
                // Slow contraction leaves a geometric tail well above the last step.
                let rate = change / last;
                let tail = if rate < 1.0 { change * rate / (1.0 - rate) } else { f64::INFINITY };
                last = change;
                if change < tol && tail < tol {
                    break;
                }
            }
            worst = worst.max(sweeps);
        }
        Ok(worst)
    }

    fn sweep(&self, col: &mut [f64]) -> f64 {
        let mut change = 0.0_f64;
        for (f, lw) in self.factors.iter().zip(&self.level_weight) {
            let mut sums = vec![0.0; lw.len()];
            for ((&l, &wk), &v) in f.iter().zip(self.weights).zip(col.iter()) {
                sums[l] += wk * v;
            }
            for (s, &tw) in sums.iter_mut().zip(lw) {
                *s = if tw > 0.0 { *s / tw } else { 0.0 };
            }
            for (&l, v) in f.iter().zip(col.iter_mut()) {
                *v -= sums[l];
            }
            change = change.max(sums.iter().fold(0.0_f64, |m, s| m.max(s.abs())));
        }
        change
    }
}
