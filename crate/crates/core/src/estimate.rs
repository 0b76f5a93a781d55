//! Estimator outputs shared by every estimator family.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

/// A scalar summary with the estimand it targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub label: String,
}

impl Estimate {
    pub fn new(value: f64, label: impl Into<String>) -> Self {
        Estimate {
            value,
            label: label.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub estimate: f64,
    pub dispersion: Option<f64>,
    /// Pre-treatment point computed from in-sample residuals rather than a
    /// held-out contrast.
    pub in_sample: bool,
}

/// Effect estimates indexed by event time.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventStudyCurve {
    pub points: BTreeMap<i32, CurvePoint>,
    /// Event times normalized to zero.
    pub reference: BTreeSet<i32>,
}

impl EventStudyCurve {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, e: i32, estimate: f64) {
        self.points.insert(
            e,
            CurvePoint {
                estimate,
                dispersion: None,
                in_sample: false,
            },
        );
    }

    pub fn insert_in_sample(&mut self, e: i32, estimate: f64) {
        self.points.insert(
            e,
            CurvePoint {
                estimate,
                dispersion: None,
                in_sample: true,
            },
        );
    }

    pub fn insert_reference(&mut self, e: i32) {
        self.insert(e, 0.0);
        self.reference.insert(e);
    }

    pub fn get(&self, e: i32) -> Option<f64> {
        self.points.get(&e).map(|p| p.estimate)
    }

    /// `(e, estimate)` pairs in increasing event time.
    pub fn values(&self) -> impl Iterator<Item = (i32, f64)> + '_ {
        self.points.iter().map(|(&e, p)| (e, p.estimate))
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Frequency-weighted mean of `(value, weight)` pairs.
pub(crate) fn weighted_mean(items: impl IntoIterator<Item = (f64, f64)>) -> f64 {
    let (num, den) = items
        .into_iter()
        .fold((0.0, 0.0), |(n, d), (v, w)| (n + v * w, d + w));
    num / den
}
