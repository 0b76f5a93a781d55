use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{Estimate, EventStudyCurve};
use crate::panel::{Cohort, PanelDataset};

/// Cells observed without treatment.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMask {
    n_units: usize,
    n_periods: usize,
    /// Row-major, `true` for cells in O.
    observed: Vec<bool>,
}

impl ObservationMask {
    pub fn new(n_units: usize, n_periods: usize, observed: Vec<bool>) -> Result<Self> {
        if observed.len() != n_units * n_periods {
            return Err(Error::InvalidConfig("mask size does not match the matrix".into()));
        }
        if !observed.iter().any(|&o| o) {
            return Err(Error::InvalidConfig("observation mask is empty".into()));
        }
        Ok(ObservationMask {
            n_units,
            n_periods,
            observed,
        })
    }

    /// O = untreated cells of the panel.
    pub fn untreated(panel: &PanelDataset) -> Result<Self> {
        Self::new(
            panel.n_units(),
            panel.n_periods(),
            panel.treated().iter().map(|&d| !d).collect(),
        )
    }

    pub fn n_units(&self) -> usize {
        self.n_units
    }

    pub fn n_periods(&self) -> usize {
        self.n_periods
    }

    pub fn is_observed(&self, i: usize, t: usize) -> bool {
        self.observed[i * self.n_periods + t]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.observed
    }

    pub fn count(&self) -> usize {
        self.observed.iter().filter(|&&o| o).count()
    }

    /// First unit (index) and first period (0-based) with no observed cell.
    pub(crate) fn coverage_gap(&self) -> (Option<usize>, Option<usize>) {
        let unit = (0..self.n_units).find(|&i| !(0..self.n_periods).any(|t| self.is_observed(i, t)));
        let period = (0..self.n_periods).find(|&t| !(0..self.n_units).any(|i| self.is_observed(i, t)));
        (unit, period)
    }
}

/// Additive untreated-outcome model `Y_it(0) = α_i + ζ_t` fitted on O.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlModel {
    pub unit_effects: Vec<f64>,
    /// Normalized to mean zero.
    pub period_effects: Vec<f64>,
    pub normalization: String,
}

impl ControlModel {
    pub fn predict(&self, i: usize, t: usize) -> f64 {
        self.unit_effects[i] + self.period_effects[t]
    }
}

/// Least-squares two-way fit on the observed cells of a row-major matrix.
///
/// Eliminating the unit effects leaves a `T × T` system for the period
/// effects, so the solution is exact rather than iterative.
pub(crate) fn fit_two_way(y: &[f64], mask: &ObservationMask) -> Result<(Vec<f64>, Vec<f64>)> {
    let (n, t_max) = (mask.n_units, mask.n_periods);
    let mut m = DMatrix::<f64>::zeros(t_max, t_max);
    let mut b = DVector::<f64>::zeros(t_max);
    let mut row_mean = vec![0.0; n];
    let mut obs = Vec::with_capacity(t_max);
    for i in 0..n {
        obs.clear();
        obs.extend((0..t_max).filter(|&t| mask.is_observed(i, t)));
        let k = obs.len() as f64;
        let mean = obs.iter().map(|&t| y[i * t_max + t]).sum::<f64>() / k;
        row_mean[i] = mean;
        for &t in &obs {
            b[t] += y[i * t_max + t] - mean;
            m[(t, t)] += 1.0;
            for &s in &obs {
                m[(t, s)] -= 1.0 / k;
            }
        }
    }
    // Adding 11'/T pins Σζ = 0 without changing the solution on 1⊥.
    m.add_scalar_mut(1.0 / t_max as f64);
    let zeta = m
        .cholesky()
        .ok_or_else(|| Error::CollinearDesign("untreated cells do not connect all units and periods".into()))?
        .solve(&b);
    let zeta: Vec<f64> = zeta.iter().copied().collect();
    let alpha = (0..n)
        .map(|i| {
            let (s, k) = (0..t_max)
                .filter(|&t| mask.is_observed(i, t))
                .fold((0.0, 0.0), |(s, k), t| (s + zeta[t], k + 1.0));
            row_mean[i] - s / k
        })
        .collect();
    Ok((alpha, zeta))
}

/// Fits `y = α_i + ζ_t` on untreated cells only.
pub fn fit_control_model(panel: &PanelDataset) -> Result<ControlModel> {
    let mask = ObservationMask::untreated(panel)?;
    match mask.coverage_gap() {
        (Some(i), _) => return Err(Error::UnidentifiedUnit(panel.units()[i])),
        (_, Some(t)) => return Err(Error::UnidentifiedPeriod(t as i64 + 1)),
        _ => {}
    }
    let (unit_effects, period_effects) = fit_two_way(panel.outcome(), &mask)?;
    Ok(ControlModel {
        unit_effects,
        period_effects,
        normalization: "mean-zero-period-effects".into(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellEffect {
    /// Unit index into the panel.
    pub unit: usize,
    pub period: u32,
    pub event_time: i32,
    pub value: f64,
}

/// Unit-level effect estimates on every treated cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellEffects {
    pub estimator: String,
    pub cells: Vec<CellEffect>,
}

/// `δ̂_it = y_it - Ŷ_it(0)` on every treated cell, given a counterfactual.
pub(crate) fn treated_residuals(
    panel: &PanelDataset,
    estimator: &str,
    counterfactual: impl Fn(usize, usize) -> f64,
) -> CellEffects {
    let t_max = panel.n_periods();
    let mut cells = Vec::with_capacity(panel.n_treated_cells());
    for i in 0..panel.n_units() {
        let Cohort::Treated(g) = panel.cohort(i) else {
            continue;
        };
        for t in g..=t_max as u32 {
            cells.push(CellEffect {
                unit: i,
                period: t,
                event_time: t as i32 - g as i32,
                value: panel.y(i, t) - counterfactual(i, t as usize - 1),
            });
        }
    }
    CellEffects {
        estimator: estimator.into(),
        cells,
    }
}

pub fn impute_effects(panel: &PanelDataset, cm: &ControlModel) -> CellEffects {
    treated_residuals(panel, "bjs", |i, t| cm.predict(i, t))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AggregationWeights {
    /// `w_it = 1/N_1` over treated cells.
    UniformAtt,
    /// Mean within each event time `e ≥ 0`.
    ByEventTime,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Aggregate {
    Overall(Estimate),
    Curve(EventStudyCurve),
}

pub fn aggregate_effects(ce: &CellEffects, scheme: AggregationWeights) -> Result<Aggregate> {
    if ce.cells.is_empty() {
        return Err(Error::NoTreatedCells);
    }
    Ok(match scheme {
        AggregationWeights::UniformAtt => Aggregate::Overall(overall(ce)),
        AggregationWeights::ByEventTime => Aggregate::Curve(event_curve(ce)),
    })
}

pub(crate) fn overall(ce: &CellEffects) -> Estimate {
    let mean = ce.cells.iter().map(|c| c.value).sum::<f64>() / ce.cells.len() as f64;
    Estimate::new(mean, ce.estimator.clone())
}

pub(crate) fn event_curve(ce: &CellEffects) -> EventStudyCurve {
    let mut acc: BTreeMap<i32, (f64, usize)> = BTreeMap::new();
    for c in &ce.cells {
        let slot = acc.entry(c.event_time).or_insert((0.0, 0));
        slot.0 += c.value;
        slot.1 += 1;
    }
    let mut curve = EventStudyCurve::new();
    for (e, (s, k)) in acc {
        curve.insert(e, s / k as f64);
    }
    curve
}

/// Mean in-sample residual of the fitted untreated model over pre-treatment
/// cells of ever-treated units, by event time `-max_lead..=-1`.
///
/// These residuals come from the same cells the model was fitted on, so they
/// are structurally shrunk toward zero and are flagged `in_sample` downstream.
pub(crate) fn pre_period_residuals(
    panel: &PanelDataset,
    max_lead: u32,
    fitted: impl Fn(usize, usize) -> f64,
) -> BTreeMap<i32, f64> {
    let mut acc: BTreeMap<i32, (f64, usize)> = BTreeMap::new();
    for i in 0..panel.n_units() {
        let Cohort::Treated(g) = panel.cohort(i) else {
            continue;
        };
        for t in 1..g {
            let e = t as i32 - g as i32;
            if e < -(max_lead as i32) {
                continue;
            }
            let slot = acc.entry(e).or_insert((0.0, 0));
            slot.0 += panel.y(i, t) - fitted(i, t as usize - 1);
            slot.1 += 1;
        }
    }
    acc.into_iter().map(|(e, (s, k))| (e, s / k as f64)).collect()
}

/// Imputation estimator output.
#[derive(Debug, Clone, PartialEq)]
pub struct Imputation {
    pub model: ControlModel,
    pub effects: CellEffects,
    pub overall: Estimate,
    /// Post-treatment means by event time plus in-sample pre-period residuals.
    pub curve: EventStudyCurve,
}

/// Fit, impute and aggregate in one call.
pub fn bjs(panel: &PanelDataset, max_lead: u32) -> Result<Imputation> {
    let model = fit_control_model(panel)?;
    let effects = impute_effects(panel, &model);
    if effects.cells.is_empty() {
        return Err(Error::NoTreatedCells);
    }
    let mut curve = event_curve(&effects);
    for (e, v) in pre_period_residuals(panel, max_lead, |i, t| model.predict(i, t)) {
        curve.insert_in_sample(e, v);
    }
    Ok(Imputation {
        overall: overall(&effects),
        model,
        effects,
        curve,
    })
}
