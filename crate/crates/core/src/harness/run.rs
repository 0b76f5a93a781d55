use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::plan::{BenchPlan, EstimatorId, EstimatorSettings};
use super::report::{summarize, SimulationReport};
use crate::dgp::{generate_with_rng, stream_rng, true_att_by_event_time, true_att_overall, ScenarioConfig};
use crate::error::{Error, Result};
use crate::estimate::EventStudyCurve;
use crate::fe::{etwfe, saturated_window, sun_abraham, twfe_event_study, twfe_static};
use crate::grouptime::callaway_santanna;
use crate::impute::{bjs, mc_effects};
use crate::panel::PanelDataset;

/// What one estimator produced on one panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorOutput {
    pub overall: f64,
    pub curve: Option<EventStudyCurve>,
    pub lambda_star: Option<f64>,
}

/// Treated-cell counts by event time, used to summarize event-study coefficients.
fn event_time_counts(panel: &PanelDataset) -> BTreeMap<i32, f64> {
    let mut counts = BTreeMap::new();
    let t_max = panel.n_periods() as u32;
    for (c, n) in panel.cohort_sizes() {
        if let Some(g) = c.onset() {
            for t in g..=t_max {
                *counts.entry((t - g) as i32).or_insert(0.0) += n as f64;
            }
        }
    }
    counts
}

/// Runs estimator `id` on `panel`.
pub fn run_estimator(id: EstimatorId, panel: &PanelDataset, settings: &EstimatorSettings) -> Result<EstimatorOutput> {
    let plain = |overall: f64, curve: Option<EventStudyCurve>| EstimatorOutput {
        overall,
        curve,
        lambda_star: None,
    };
    Ok(match id {
        EstimatorId::Twfe => plain(twfe_static(panel)?.value, None),
        EstimatorId::TwfeEs => {
            let (lead, lag) = match settings.es_window {
                Some(w) => w,
                None => saturated_window(panel).ok_or(Error::NoTreatedCells)?,
            };
            let curve = twfe_event_study(panel, lead, lag)?;
            // Post-period coefficients weighted by treated cells at each event time;
            // a binned endpoint stands in for every event time it absorbs.
            let counts = event_time_counts(panel);
            let (mut num, mut den) = (0.0, 0.0);
            for (&e, &n) in &counts {
                let b = curve.get(e.min(lag as i32)).unwrap_or(0.0);
                num += n * b;
                den += n;
            }
            plain(num / den, Some(curve))
        }
        EstimatorId::Sa => {
            let fit = sun_abraham(panel, settings.sa_control)?;
            plain(fit.overall.value, Some(fit.curve))
        }
        EstimatorId::Cs => {
            let fit = callaway_santanna(panel, settings.cs_control, settings.anticipation)?;
            plain(fit.overall.value, Some(fit.curve))
        }
        EstimatorId::Bjs => {
            let fit = bjs(panel, settings.placebo_leads)?;
            plain(fit.overall.value, Some(fit.curve))
        }
        EstimatorId::Mc => {
            let fit = mc_effects(panel, &settings.mc, settings.placebo_leads)?;
            EstimatorOutput {
                overall: fit.overall.value,
                curve: Some(fit.curve),
                lambda_star: Some(fit.lambda_star),
            }
        }
        EstimatorId::Etwfe => {
            let fit = etwfe(panel)?;
            plain(fit.overall.value, Some(fit.curve))
        }
    })
}

/// Outcome of one estimator in one replication; failures are kept, not raised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorOutcome {
    Ok(EstimatorOutput),
    Failed { kind: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub scenario: String,
    pub replication: usize,
    pub outcomes: BTreeMap<EstimatorId, EstimatorOutcome>,
    pub true_overall: f64,
    pub true_path: BTreeMap<i32, f64>,
}

/// Seed for the cross-validation folds of replication `r`.
fn cv_seed(base_seed: u64, replication: usize) -> u64 {
    // splitmix64 finalizer keeps neighbouring replications decorrelated.
    let mut z = base_seed ^ (replication as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Simulates replication `r` of `scenario` and runs every estimator on it.
pub fn run_replication(
    scenario: &ScenarioConfig,
    estimators: &[EstimatorId],
    settings: &EstimatorSettings,
    base_seed: u64,
    replication: usize,
) -> Result<ReplicationResult> {
    if estimators.is_empty() {
        return Err(Error::EmptyPlan("estimators"));
    }
    let mut rng = stream_rng(base_seed, replication as u64);
    let gp = generate_with_rng(scenario, &mut rng)?;
    let mut local = settings.clone();
    local.mc.cv_seed = cv_seed(base_seed ^ settings.mc.cv_seed, replication);
    let outcomes = estimators
        .iter()
        .map(|&id| {
            let outcome = match run_estimator(id, &gp.panel, &local) {
                Ok(out) => EstimatorOutcome::Ok(out),
                Err(e) => EstimatorOutcome::Failed {
                    kind: e.kind().to_string(),
                    message: e.to_string(),
                },
            };
            (id, outcome)
        })
        .collect();
    Ok(ReplicationResult {
        scenario: scenario.name.clone(),
        replication,
        outcomes,
        true_overall: true_att_overall(&gp),
        true_path: true_att_by_event_time(&gp),
    })
}

/// Environment variable that sets the worker count.
pub const WORKERS_ENV: &str = "DIDLAB_WORKERS";

/// How replications are distributed over threads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    Sequential,
    /// `None` uses rayon's default pool.
    Parallel { workers: Option<usize> },
}

impl Schedule {
    /// Parallel when the `parallel` feature is on, sized by `DIDLAB_WORKERS` if set.
    pub fn from_env() -> Result<Self> {
        let workers = match std::env::var(WORKERS_ENV) {
            Ok(v) => Some(
                v.trim()
                    .parse::<usize>()
                    .ok()
                    .filter(|&n| n >= 1)
                    .ok_or_else(|| Error::InvalidConfig(format!("{WORKERS_ENV} must be a positive integer, got {v:?}")))?,
            ),
            Err(_) => None,
        };
        Ok(if cfg!(feature = "parallel") {
            Schedule::Parallel { workers }
        } else {
            Schedule::Sequential
        })
    }
}

/// Runs the plan with the schedule chosen by the environment.
pub fn run_bench(plan: &BenchPlan) -> Result<SimulationReport> {
    run_bench_with(plan, Schedule::from_env()?)
}

/// Runs every `(scenario, replication)` job and aggregates in job order, so the
/// report does not depend on the schedule.
pub fn run_bench_with(plan: &BenchPlan, schedule: Schedule) -> Result<SimulationReport> {
    plan.validate()?;
    let jobs: Vec<(usize, usize)> = (0..plan.scenarios.len())
        .flat_map(|s| (0..plan.replications).map(move |r| (s, r)))
        .collect();
    let job = |&(s, r): &(usize, usize)| {
        run_replication(
            &plan.scenarios[s],
            &plan.estimators_for(r),
            &plan.settings,
            plan.base_seed,
            r,
        )
    };
    let results: Vec<Result<ReplicationResult>> = match schedule {
        Schedule::Sequential => jobs.iter().map(job).collect(),
        Schedule::Parallel { workers } => parallel_map(&jobs, workers, job)?,
    };
    let replications = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(summarize(plan, replications))
}

#[cfg(feature = "parallel")]
fn parallel_map<T, U, F>(items: &[T], workers: Option<usize>, f: F) -> Result<Vec<U>>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    match workers {
        None => Ok(items.par_iter().map(f).collect()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
            Ok(pool.install(|| items.par_iter().map(f).collect()))
        }
    }
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, U, F>(items: &[T], _workers: Option<usize>, f: F) -> Result<Vec<U>>
where
    F: Fn(&T) -> U,
{
    Ok(items.iter().map(f).collect())
}
