use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::solver::{absorb_and_solve, RegressionProblem, DEMEAN_MAX_ITER, DEMEAN_TOL};
use crate::error::{Error, Result};
use crate::estimate::{weighted_mean, Estimate, EventStudyCurve};
use crate::panel::{Cohort, CohortMeans, PanelDataset};

/// Cohort-by-period cells of a balanced panel.
///
/// When every regressor depends on the unit only through its cohort, the
/// unit-and-period fixed-effects regression on the full panel has exactly the
/// same slope coefficients as the cohort-and-period fixed-effects regression
/// on cell means weighted by cohort size. All regression estimators here use
/// that reduction.
struct CellDesign {
    cm: CohortMeans,
    /// `(cohort index, period)` of every retained cell.
    cells: Vec<(usize, u32)>,
}

impl CellDesign {
    fn new(panel: &PanelDataset, keep: impl Fn(Cohort, u32) -> bool) -> Self {
        let cm = panel.cohort_means();
        let mut cells = Vec::new();
        for (k, &c) in cm.cohorts.iter().enumerate() {
            for t in 1..=cm.n_periods as u32 {
                if keep(c, t) {
                    cells.push((k, t));
                }
            }
        }
        CellDesign { cm, cells }
    }

    fn cohort(&self, cell: usize) -> Cohort {
        self.cm.cohorts[self.cells[cell].0]
    }

    /// Indicator column for the cells satisfying `pred`.
    fn dummy(&self, pred: impl Fn(Cohort, u32) -> bool) -> Vec<f64> {
        self.cells
            .iter()
            .map(|&(k, t)| if pred(self.cm.cohorts[k], t) { 1.0 } else { 0.0 })
            .collect()
    }

    fn solve(&self, regressors: Vec<Vec<f64>>) -> Result<Vec<f64>> {
        // Compact level indices so dropped cohorts or periods leave no empty levels.
        let mut cohort_level = BTreeMap::new();
        let mut period_level = BTreeMap::new();
        for &(k, t) in &self.cells {
            let n = cohort_level.len();
            cohort_level.entry(k).or_insert(n);
            let n = period_level.len();
            period_level.entry(t).or_insert(n);
        }
        let problem = RegressionProblem {
            response: self.cells.iter().map(|&(k, t)| self.cm.mean(k, t)).collect(),
            weights: Some(self.cells.iter().map(|&(k, _)| self.cm.counts[k] as f64).collect()),
            absorbed: vec![
                self.cells.iter().map(|(k, _)| cohort_level[k]).collect(),
                self.cells.iter().map(|(_, t)| period_level[t]).collect(),
            ],
            regressors,
        };
        Ok(absorb_and_solve(&problem, DEMEAN_TOL, DEMEAN_MAX_ITER)?.coefficients)
    }

    fn count_of(&self, g: u32) -> f64 {
        self.cm
            .index_of(Cohort::Treated(g))
            .map_or(0.0, |k| self.cm.counts[k] as f64)
    }
}

fn require_treated(panel: &PanelDataset) -> Result<()> {
    let any_treated = panel.treated().iter().any(|&d| d);
    let any_control = panel.treated().iter().any(|&d| !d);
    if !any_treated {
        return Err(Error::NoTreatedCells);
    }
    if !any_control {
        return Err(Error::EmptyControl(": every cell is treated".into()));
    }
    Ok(())
}

/// Static two-way fixed-effects coefficient on the treatment indicator.
pub fn twfe_static(panel: &PanelDataset) -> Result<Estimate> {
    require_treated(panel)?;
    let design = CellDesign::new(panel, |_, _| true);
    let d = design.dummy(|c, t| c.onset().is_some_and(|g| t >= g));
    let beta = design.solve(vec![d])?;
    Ok(Estimate::new(beta[0], "twfe"))
}

/// Widest event window supported by the panel's cohorts: `(max_lead, max_lag)`.
pub fn saturated_window(panel: &PanelDataset) -> Option<(u32, u32)> {
    let t_max = panel.n_periods() as i32;
    let onsets: Vec<i32> = panel
        .cohort_sizes()
        .keys()
        .filter_map(|c| c.onset())
        .map(|g| g as i32)
        .collect();
    let first = *onsets.first()?;
    let last = *onsets.last()?;
    let lead = (last - 1).max(1) as u32;
    let lag = (t_max - first).max(1) as u32;
    Some((lead, lag))
}

/// Event-study regression with dummies for `e ∈ {-max_lead..-2, 0..max_lag}`.
///
/// Event times beyond the window are binned into the endpoint dummies; `e = -1`
/// and never-treated cells form the omitted baseline.
pub fn twfe_event_study(panel: &PanelDataset, max_lead: u32, max_lag: u32) -> Result<EventStudyCurve> {
    if max_lead < 1 || max_lag < 1 {
        return Err(Error::InvalidConfig("event window needs max_lead ≥ 1 and max_lag ≥ 1".into()));
    }
    require_treated(panel)?;
    let lo = -(max_lead as i32);
    let hi = max_lag as i32;
    let bin = move |c: Cohort, t: u32| c.onset().map(|g| (t as i32 - g as i32).clamp(lo, hi));
    let bins: Vec<i32> = (lo..=hi).filter(|&e| e != -1).collect();
    let design = CellDesign::new(panel, |_, _| true);
    let mut columns = Vec::with_capacity(bins.len());
    for &e in &bins {
        let col = design.dummy(|c, t| bin(c, t) == Some(e));
        if col.iter().all(|&v| v == 0.0) {
            return Err(Error::EmptyEventBin(e));
        }
        columns.push(col);
    }
    let beta = design.solve(columns)?;
    let mut curve = EventStudyCurve::new();
    for (&e, &b) in bins.iter().zip(&beta) {
        curve.insert(e, b);
    }
    curve.insert_reference(-1);
    Ok(curve)
}

/// Comparison group for the interacted regressions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SaControl {
    NeverTreated,
    /// The latest-treated cohort, observed only before its own onset.
    LastTreatedCohort,
}

/// Interaction-weighted event study.
#[derive(Debug, Clone, PartialEq)]
pub struct SunAbraham {
    /// `(g, e) ↦ δ̂_{g,e}`; `e = -1` is the reference and omitted.
    pub cohort_effects: BTreeMap<(u32, i32), f64>,
    pub curve: EventStudyCurve,
    pub overall: Estimate,
}

/// Saturated cohort-by-event-time regression, aggregated to a curve with
/// weights proportional to cohort size among cohorts observed at each `e`.
pub fn sun_abraham(panel: &PanelDataset, control: SaControl) -> Result<SunAbraham> {
    require_treated(panel)?;
    let sizes = panel.cohort_sizes();
    let (design, treated_cohorts): (CellDesign, Vec<u32>) = match control {
        SaControl::NeverTreated => {
            if !sizes.contains_key(&Cohort::Never) {
                return Err(Error::EmptyControl(": no never-treated units".into()));
            }
            let gs = sizes.keys().filter_map(|c| c.onset()).collect();
            (CellDesign::new(panel, |_, _| true), gs)
        }
        SaControl::LastTreatedCohort => {
            let gs: Vec<u32> = sizes.keys().filter_map(|c| c.onset()).collect();
            let last = *gs.last().ok_or(Error::NoTreatedCells)?;
            if last <= 2 || gs.len() < 2 {
                return Err(Error::EmptyControl(": last-treated cohort leaves no usable comparison".into()));
            }
            let design = CellDesign::new(panel, |c, t| c.is_treated() && t < last);
            (design, gs[..gs.len() - 1].to_vec())
        }
    };

    let mut keys = Vec::new();
    let mut columns = Vec::new();
    for &g in &treated_cohorts {
        let mut es: Vec<i32> = design
            .cells
            .iter()
            .enumerate()
            .filter(|&(i, _)| design.cohort(i) == Cohort::Treated(g))
            .map(|(_, &(_, t))| t as i32 - g as i32)
            .filter(|&e| e != -1)
            .collect();
        es.sort_unstable();
        es.dedup();
        for e in es {
            keys.push((g, e));
            columns.push(design.dummy(|c, t| c == Cohort::Treated(g) && t as i32 - g as i32 == e));
        }
    }
    if keys.iter().all(|&(_, e)| e < 0) {
        return Err(Error::NoTreatedCells);
    }
    let beta = design.solve(columns)?;
    let cohort_effects: BTreeMap<(u32, i32), f64> = keys.into_iter().zip(beta).collect();
    let (curve, overall) = aggregate_cohort_effects(&design, &cohort_effects, true);
    Ok(SunAbraham {
        cohort_effects,
        curve,
        overall: Estimate::new(overall, "sa"),
    })
}

/// Cohort-size weighted curve and overall post-treatment mean of `(g, e)` effects.
fn aggregate_cohort_effects(
    design: &CellDesign,
    effects: &BTreeMap<(u32, i32), f64>,
    with_reference: bool,
) -> (EventStudyCurve, f64) {
    let mut by_e: BTreeMap<i32, Vec<(f64, f64)>> = BTreeMap::new();
    for (&(g, e), &v) in effects {
        by_e.entry(e).or_default().push((v, design.count_of(g)));
    }
    let mut curve = EventStudyCurve::new();
    for (e, items) in &by_e {
        curve.insert(*e, weighted_mean(items.iter().copied()));
    }
    if with_reference {
        curve.insert_reference(-1);
    }
    let overall = weighted_mean(
        effects
            .iter()
            .filter(|(&(_, e), _)| e >= 0)
            .map(|(&(g, _), &v)| (v, design.count_of(g))),
    );
    (curve, overall)
}

/// Extended two-way fixed effects fit.
#[derive(Debug, Clone, PartialEq)]
pub struct Etwfe {
    /// `(g, t) ↦ δ̂_{g,t}` for every treated cohort-period with `t ≥ g`.
    pub cohort_period_effects: BTreeMap<(u32, u32), f64>,
    /// Marginal effects by event time, `e ≥ 0` only.
    pub curve: EventStudyCurve,
    pub overall: Estimate,
}

/// Period effects, cohort intercepts and one interaction per post-onset
/// cohort-period cell. No pre-treatment coefficients are estimated.
pub fn etwfe(panel: &PanelDataset) -> Result<Etwfe> {
    require_treated(panel)?;
    if !panel.cohort_sizes().contains_key(&Cohort::Never) {
        return Err(Error::EmptyControl(": no never-treated units".into()));
    }
    let design = CellDesign::new(panel, |_, _| true);
    let mut keys = Vec::new();
    let mut columns = Vec::new();
    for (i, &(_, t)) in design.cells.iter().enumerate() {
        if let Cohort::Treated(g) = design.cohort(i) {
            if t >= g {
                keys.push((g, t));
                columns.push(design.dummy(|c, s| c == Cohort::Treated(g) && s == t));
            }
        }
    }
    let beta = design.solve(columns)?;
    let cohort_period_effects: BTreeMap<(u32, u32), f64> = keys.into_iter().zip(beta).collect();
    let by_event: BTreeMap<(u32, i32), f64> = cohort_period_effects
        .iter()
        .map(|(&(g, t), &v)| ((g, t as i32 - g as i32), v))
        .collect();
    let (curve, overall) = aggregate_cohort_effects(&design, &by_event, false);
    Ok(Etwfe {
        cohort_period_effects,
        curve,
        overall: Estimate::new(overall, "etwfe"),
    })
}
