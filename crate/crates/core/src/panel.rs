//! Balanced unit × period panels with absorbing treatment.
//!
//! Periods are the integers `1..=T`. A unit's cohort is the first period in
//! which it is treated; effects are indexed by event time `e = t - g`, so
//! `e = 0` is the first treated period and `e = -1` the last untreated one.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Treatment-timing group of a unit.
///
/// Ordering puts treated cohorts first (by onset) and never-treated last,
/// matching the usual `g = ∞` convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Cohort {
    Treated(u32),
    Never,
}

impl Cohort {
    pub fn onset(self) -> Option<u32> {
        match self {
            Cohort::Treated(g) => Some(g),
            Cohort::Never => None,
        }
    }

    pub fn is_treated(self) -> bool {
        matches!(self, Cohort::Treated(_))
    }
}

/// Periods elapsed since treatment onset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventTime(pub i32);

/// `e = t - g`. Undefined for never-treated units.
pub fn event_time(period: u32, cohort: Cohort) -> Result<EventTime> {
    match cohort {
        Cohort::Treated(g) => Ok(EventTime(period as i32 - g as i32)),
        Cohort::Never => Err(Error::NotApplicable("event time")),
    }
}

/// One observation as it appears in the panel CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PanelRow {
    pub unit: i64,
    pub period: i64,
    pub y: f64,
    pub d: f64,
}

/// Rectangular panel. Immutable once built; every constructor validates.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    units: Vec<i64>,
    n_periods: usize,
    /// Row-major, `units.len() × n_periods`.
    outcome: Vec<f64>,
    treated: Vec<bool>,
    cohorts: Vec<Cohort>,
}

/// Checks a bag of rows and builds the panel.
///
/// Rows may come in any order. Rejects duplicates, missing cells, period sets
/// other than `1..=T`, and treatment paths that switch off.
pub fn validate_panel(rows: &[PanelRow]) -> Result<PanelDataset> {
    if rows.is_empty() {
        return Err(Error::EmptyPanel);
    }
    let mut units: Vec<i64> = rows.iter().map(|r| r.unit).collect();
    units.sort_unstable();
    units.dedup();
    let mut periods: Vec<i64> = rows.iter().map(|r| r.period).collect();
    periods.sort_unstable();
    periods.dedup();
    let n_periods = periods.len();
    if periods.iter().enumerate().any(|(k, &p)| p != k as i64 + 1) {
        return Err(Error::UnbalancedPanel(format!(
            "periods must be the consecutive integers 1..=T, found {}..={} with {} distinct values",
            periods[0],
            periods[n_periods - 1],
            n_periods
        )));
    }
    let index: HashMap<i64, usize> = units.iter().enumerate().map(|(k, &u)| (u, k)).collect();
    let n = units.len();
    let mut outcome = vec![f64::NAN; n * n_periods];
    let mut treated = vec![false; n * n_periods];
    let mut seen = vec![false; n * n_periods];
    for r in rows {
        let cell = index[&r.unit] * n_periods + (r.period - 1) as usize;
        if seen[cell] {
            return Err(Error::DuplicateCell {
                unit: r.unit,
                period: r.period,
            });
        }
        seen[cell] = true;
        if !r.y.is_finite() {
            return Err(Error::NonFiniteInput("outcome"));
        }
        treated[cell] = if r.d == 1.0 {
            true
        } else if r.d == 0.0 {
            false
        } else {
            return Err(Error::InvalidTreatment {
                unit: r.unit,
                period: r.period,
                value: r.d,
            });
        };
        outcome[cell] = r.y;
    }
    if let Some(cell) = seen.iter().position(|s| !s) {
        return Err(Error::UnbalancedPanel(format!(
            "missing cell (unit {}, period {})",
            units[cell / n_periods],
            cell % n_periods + 1
        )));
    }
    PanelDataset::from_parts(units, n_periods, outcome, treated)
}

impl PanelDataset {
    /// Builds a panel from dense row-major matrices.
    pub fn from_parts(
        units: Vec<i64>,
        n_periods: usize,
        outcome: Vec<f64>,
        treated: Vec<bool>,
    ) -> Result<Self> {
        let n = units.len();
        if n == 0 || n_periods == 0 {
            return Err(Error::EmptyPanel);
        }
        if outcome.len() != n * n_periods || treated.len() != n * n_periods {
            return Err(Error::UnbalancedPanel(format!(
                "expected {} cells, got {} outcomes and {} treatment flags",
                n * n_periods,
                outcome.len(),
                treated.len()
            )));
        }
        if outcome.iter().any(|y| !y.is_finite()) {
            return Err(Error::NonFiniteInput("outcome"));
        }
        let mut sorted = units.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            let dup = sorted.windows(2).find(|w| w[0] == w[1]).unwrap()[0];
            return Err(Error::DuplicateCell {
                unit: dup,
                period: 1,
            });
        }
        let mut cohorts = Vec::with_capacity(n);
        for (i, &unit) in units.iter().enumerate() {
            let row = &treated[i * n_periods..(i + 1) * n_periods];
            let mut onset = None;
            for (t, &d) in row.iter().enumerate() {
                match (onset, d) {
                    (None, true) => onset = Some(t as u32 + 1),
                    (Some(_), false) => {
                        return Err(Error::NonAbsorbingTreatment {
                            unit,
                            period: t as i64 + 1,
                        })
                    }
                    _ => {}
                }
            }
            cohorts.push(onset.map_or(Cohort::Never, Cohort::Treated));
        }
        Ok(Self {
            units,
            n_periods,
            outcome,
            treated,
            cohorts,
        })
    }

    pub fn n_units(&self) -> usize {
        self.units.len()
    }

    pub fn n_periods(&self) -> usize {
        self.n_periods
    }

    pub fn n_cells(&self) -> usize {
        self.outcome.len()
    }

    pub fn units(&self) -> &[i64] {
        &self.units
    }

    /// Outcome of unit index `i` at period `t` (1-based).
    pub fn y(&self, i: usize, t: u32) -> f64 {
        self.outcome[i * self.n_periods + t as usize - 1]
    }

    pub fn is_treated(&self, i: usize, t: u32) -> bool {
        self.treated[i * self.n_periods + t as usize - 1]
    }

    /// Row-major outcome matrix.
    pub fn outcome(&self) -> &[f64] {
        &self.outcome
    }

    /// Row-major treatment matrix.
    pub fn treated(&self) -> &[bool] {
        &self.treated
    }

    pub fn outcome_row(&self, i: usize) -> &[f64] {
        &self.outcome[i * self.n_periods..(i + 1) * self.n_periods]
    }

    pub fn cohort(&self, i: usize) -> Cohort {
        self.cohorts[i]
    }

    pub fn cohorts(&self) -> &[Cohort] {
        &self.cohorts
    }

    pub fn ever_treated(&self, i: usize) -> bool {
        self.cohorts[i].is_treated()
    }

    pub fn n_treated_cells(&self) -> usize {
        self.treated.iter().filter(|&&d| d).count()
    }

    /// Number of units per cohort.
    pub fn cohort_sizes(&self) -> BTreeMap<Cohort, usize> {
        let mut sizes = BTreeMap::new();
        for &c in &self.cohorts {
            *sizes.entry(c).or_insert(0) += 1;
        }
        sizes
    }

    /// Same panel with the outcome replaced.
    pub fn with_outcome(&self, outcome: Vec<f64>) -> Result<Self> {
        if outcome.len() != self.outcome.len() {
            return Err(Error::UnbalancedPanel("outcome length mismatch".into()));
        }
        if outcome.iter().any(|y| !y.is_finite()) {
            return Err(Error::NonFiniteInput("outcome"));
        }
        Ok(Self {
            outcome,
            ..self.clone()
        })
    }

    pub fn rows(&self) -> impl Iterator<Item = PanelRow> + '_ {
        let t_max = self.n_periods;
        (0..self.outcome.len()).map(move |cell| PanelRow {
            unit: self.units[cell / t_max],
            period: (cell % t_max) as i64 + 1,
            y: self.outcome[cell],
            d: if self.treated[cell] { 1.0 } else { 0.0 },
        })
    }

    /// Reads the `unit,period,y,d` CSV schema.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        for want in ["unit", "period", "y", "d"] {
            if !headers.iter().any(|h| h == want) {
                return Err(Error::Parse(format!("panel CSV lacks column {want:?}")));
            }
        }
        let rows = rdr
            .deserialize::<PanelRow>()
            .collect::<std::result::Result<Vec<_>, _>>()?;
        validate_panel(&rows)
    }

    pub fn read_csv_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["unit", "period", "y", "d"])?;
        for r in self.rows() {
            wtr.write_record([
                r.unit.to_string(),
                r.period.to_string(),
                r.y.to_string(),
                (r.d as u8).to_string(),
            ])?;
        }
        wtr.flush().map_err(|e| Error::io("<panel csv>", e))?;
        Ok(())
    }

    /// Cohort × period cell means, the sufficient statistics for every
    /// estimator whose regressors vary only by cohort and period.
    pub fn cohort_means(&self) -> CohortMeans {
        let sizes = self.cohort_sizes();
        let cohorts: Vec<Cohort> = sizes.keys().copied().collect();
        let pos: BTreeMap<Cohort, usize> =
            cohorts.iter().enumerate().map(|(k, &c)| (c, k)).collect();
        let t_max = self.n_periods;
        let mut means = vec![0.0; cohorts.len() * t_max];
        for (i, c) in self.cohorts.iter().enumerate() {
            let k = pos[c];
            for (m, y) in means[k * t_max..(k + 1) * t_max]
                .iter_mut()
                .zip(self.outcome_row(i))
            {
                *m += y;
            }
        }
        let counts: Vec<usize> = sizes.values().copied().collect();
        for (k, &n) in counts.iter().enumerate() {
            for m in &mut means[k * t_max..(k + 1) * t_max] {
                *m /= n as f64;
            }
        }
        CohortMeans {
            cohorts,
            counts,
            n_periods: t_max,
            means,
        }
    }
}

/// Per-cohort mean outcome in every period.
#[derive(Debug, Clone)]
pub struct CohortMeans {
    pub cohorts: Vec<Cohort>,
    pub counts: Vec<usize>,
    pub n_periods: usize,
    means: Vec<f64>,
}

impl CohortMeans {
    /// Mean outcome of cohort index `k` at period `t` (1-based).
    pub fn mean(&self, k: usize, t: u32) -> f64 {
        self.means[k * self.n_periods + t as usize - 1]
    }

    pub fn index_of(&self, cohort: Cohort) -> Option<usize> {
        self.cohorts.iter().position(|&c| c == cohort)
    }
}

/// Maps every unit identifier to its cohort.
pub fn derive_cohorts(panel: &PanelDataset) -> BTreeMap<i64, Cohort> {
    panel
        .units()
        .iter()
        .copied()
        .zip(panel.cohorts().iter().copied())
        .collect()
}
