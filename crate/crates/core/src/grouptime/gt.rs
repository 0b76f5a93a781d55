use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{weighted_mean, Estimate, EventStudyCurve};
use crate::panel::{Cohort, CohortMeans, PanelDataset};

/// Comparison units for a group-time contrast.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControlGroup {
    NeverTreated,
    /// Cohorts first treated after both the target and the base period.
    NotYetTreated,
    /// Never-treated and not-yet-treated units pooled.
    Both,
}

impl ControlGroup {
    pub fn as_str(self) -> &'static str {
        match self {
            ControlGroup::NeverTreated => "never",
            ControlGroup::NotYetTreated => "notyet",
            ControlGroup::Both => "both",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupTimeEffect {
    pub g: u32,
    pub t: u32,
    pub value: f64,
    pub control: ControlGroup,
    pub base_period: u32,
    pub n_treated: usize,
    pub n_control: usize,
}

impl GroupTimeEffect {
    pub fn event_time(&self) -> i32 {
        self.t as i32 - self.g as i32
    }
}

/// Cohort indices usable as controls for `(t, base)` under `control`.
fn control_cohorts(cm: &CohortMeans, g: u32, t: u32, base: u32, control: ControlGroup) -> Vec<usize> {
    let horizon = t.max(base);
    cm.cohorts
        .iter()
        .enumerate()
        .filter(|&(_, &c)| match (control, c) {
            (ControlGroup::NeverTreated | ControlGroup::Both, Cohort::Never) => true,
            (ControlGroup::NotYetTreated | ControlGroup::Both, Cohort::Treated(h)) => h != g && h > horizon,
            _ => false,
        })
        .map(|(k, _)| k)
        .collect()
}

fn contrast(cm: &CohortMeans, g: u32, t: u32, base: u32, control: ControlGroup) -> Result<GroupTimeEffect> {
    let kg = cm.index_of(Cohort::Treated(g)).ok_or(Error::EmptyCohort(g))?;
    if base < 1 || base >= g || t < 1 || t as usize > cm.n_periods {
        return Err(Error::InvalidConfig(format!(
            "group-time contrast needs 1 ≤ base < g and t in range (g = {g}, t = {t}, base = {base})"
        )));
    }
    let ctrl = control_cohorts(cm, g, t, base, control);
    let n_control: usize = ctrl.iter().map(|&k| cm.counts[k]).sum();
    if n_control == 0 {
        return Err(Error::EmptyControl(format!(" for g = {g}, t = {t}")));
    }
    let ctrl_change = ctrl
        .iter()
        .map(|&k| (cm.mean(k, t) - cm.mean(k, base)) * cm.counts[k] as f64)
        .sum::<f64>()
        / n_control as f64;
    Ok(GroupTimeEffect {
        g,
        t,
        value: cm.mean(kg, t) - cm.mean(kg, base) - ctrl_change,
        control,
        base_period: base,
        n_treated: cm.counts[kg],
        n_control,
    })
}

/// Group-time difference in differences `δ̂_{g,t}` against `base_period`.
///
/// For `t < g` this is a pre-treatment placebo contrast.
pub fn att_gt(
    panel: &PanelDataset,
    g: u32,
    t: u32,
    control: ControlGroup,
    base_period: u32,
) -> Result<GroupTimeEffect> {
    contrast(&panel.cohort_means(), g, t, base_period, control)
}

/// Every estimable `δ̂_{g,t}` with base `g - 1 - anticipation`.
///
/// Cohorts without a valid base period and cells without controls are skipped.
pub fn att_gt_all(panel: &PanelDataset, control: ControlGroup, anticipation: u32) -> Vec<GroupTimeEffect> {
    let cm = panel.cohort_means();
    let mut out = Vec::new();
    for &c in &cm.cohorts {
        let Cohort::Treated(g) = c else { continue };
        let Some(base) = g.checked_sub(1 + anticipation).filter(|&b| b >= 1) else {
            continue;
        };
        for t in 1..=cm.n_periods as u32 {
            if t == base {
                continue;
            }
            if let Ok(eff) = contrast(&cm, g, t, base, control) {
                out.push(eff);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AggregationScheme {
    OverallAtt,
    EventStudy,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GtAggregate {
    Overall(Estimate),
    Curve(EventStudyCurve),
}

/// Cohort-size weighted summaries of group-time effects.
///
/// The overall ATT uses post-treatment cells only; the event study groups by
/// `e = t - g` and keeps placebo points.
pub fn aggregate_gt(effects: &[GroupTimeEffect], scheme: AggregationScheme) -> GtAggregate {
    match scheme {
        AggregationScheme::OverallAtt => GtAggregate::Overall(Estimate::new(
            weighted_mean(
                effects
                    .iter()
                    .filter(|e| e.t >= e.g)
                    .map(|e| (e.value, e.n_treated as f64)),
            ),
            "cs",
        )),
        AggregationScheme::EventStudy => {
            let mut by_e: BTreeMap<i32, Vec<(f64, f64)>> = BTreeMap::new();
            let mut reference = BTreeMap::new();
            for e in effects {
                by_e.entry(e.event_time()).or_default().push((e.value, e.n_treated as f64));
                reference.insert(e.base_period as i32 - e.g as i32, ());
            }
            let mut curve = EventStudyCurve::new();
            for (e, items) in by_e {
                curve.insert(e, weighted_mean(items));
            }
            for e in reference.into_keys() {
                curve.insert_reference(e);
            }
            GtAggregate::Curve(curve)
        }
    }
}

/// Group-time estimator output.
#[derive(Debug, Clone, PartialEq)]
pub struct CallawaySantAnna {
    pub control: ControlGroup,
    pub anticipation: u32,
    pub effects: Vec<GroupTimeEffect>,
    pub curve: EventStudyCurve,
    pub overall: Estimate,
}

pub fn callaway_santanna(panel: &PanelDataset, control: ControlGroup, anticipation: u32) -> Result<CallawaySantAnna> {
    let effects = att_gt_all(panel, control, anticipation);
    if !effects.iter().any(|e| e.t >= e.g) {
        return Err(Error::EmptyControl(format!(" ({} control): no post-treatment contrast", control.as_str())));
    }
    let GtAggregate::Overall(overall) = aggregate_gt(&effects, AggregationScheme::OverallAtt) else {
        unreachable!()
    };
    let GtAggregate::Curve(curve) = aggregate_gt(&effects, AggregationScheme::EventStudy) else {
        unreachable!()
    };
    Ok(CallawaySantAnna {
        control,
        anticipation,
        effects,
        curve,
        overall,
    })
}
