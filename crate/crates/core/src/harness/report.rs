use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::plan::{BenchPlan, EstimatorId};
use super::run::{EstimatorOutcome, ReplicationResult};
use crate::error::{Error, Result};
use crate::estimate::EventStudyCurve;
use crate::grouptime::{pretrend_report, PretrendSummary};

/// Summary of one estimator in one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub estimator: EstimatorId,
    pub n: usize,
    /// Mean true overall ATT over the replications the estimator ran on.
    pub truth: f64,
    pub mean: f64,
    /// `mean - truth`.
    pub abs_bias: f64,
    /// `(mean - truth) / truth`; `None` when the truth is zero.
    pub rel_bias: Option<f64>,
    pub sd: f64,
    /// Monte Carlo standard error of the mean.
    pub mc_se: f64,
    pub q05: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub q95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRow {
    pub scenario: String,
    pub estimator: EstimatorId,
    pub e: i32,
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub truth: f64,
    pub in_sample: bool,
    pub reference: bool,
}

impl EventRow {
    pub fn mc_se(&self) -> f64 {
        self.sd / (self.n as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrendRow {
    pub scenario: String,
    pub summary: PretrendSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub scenario: String,
    pub estimator: EstimatorId,
    pub replication: usize,
    pub kind: String,
    pub message: String,
}

/// Aggregated Monte Carlo results.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    pub plan: BenchPlan,
    pub summary: Vec<SummaryRow>,
    pub event_study: Vec<EventRow>,
    pub pretrend: Vec<PretrendRow>,
    pub failures: Vec<Failure>,
    pub replications: Vec<ReplicationResult>,
}

impl SimulationReport {
    pub fn row(&self, scenario: &str, estimator: EstimatorId) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|r| r.scenario == scenario && r.estimator == estimator)
    }

    pub fn event(&self, scenario: &str, estimator: EstimatorId, e: i32) -> Option<&EventRow> {
        self.event_study
            .iter()
            .find(|r| r.scenario == scenario && r.estimator == estimator && r.e == e)
    }

    pub fn pretrend_for(&self, scenario: &str, estimator: EstimatorId) -> Option<&PretrendSummary> {
        self.pretrend
            .iter()
            .find(|p| p.scenario == scenario && p.summary.estimator == estimator.as_str())
            .map(|p| &p.summary)
    }
}

/// Linear-interpolation quantile of sorted data (the common "type 7").
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

/// Aggregates replications in the order given.
pub fn summarize(plan: &BenchPlan, replications: Vec<ReplicationResult>) -> SimulationReport {
    let mut summary = Vec::new();
    let mut event_study = Vec::new();
    let mut pretrend = Vec::new();
    let mut failures = Vec::new();
    for scenario in &plan.scenarios {
        let reps: Vec<&ReplicationResult> = replications.iter().filter(|r| r.scenario == scenario.name).collect();
        let mut curves: BTreeMap<String, Vec<EventStudyCurve>> = BTreeMap::new();
        for &id in &plan.estimators {
            let mut est = Vec::new();
            let mut truth = Vec::new();
            // e -> (estimates, truths, in_sample, reference)
            let mut by_e: BTreeMap<i32, (Vec<f64>, Vec<f64>, bool, bool)> = BTreeMap::new();
            for rep in &reps {
                match rep.outcomes.get(&id) {
                    Some(EstimatorOutcome::Ok(out)) => {
                        est.push(out.overall);
                        truth.push(rep.true_overall);
                        if let Some(curve) = &out.curve {
                            for (&e, p) in &curve.points {
                                let slot = by_e.entry(e).or_default();
                                slot.0.push(p.estimate);
                                slot.1.push(rep.true_path.get(&e).copied().unwrap_or(0.0));
                                slot.2 |= p.in_sample;
                                slot.3 |= curve.reference.contains(&e);
                            }
                            curves.entry(id.as_str().to_string()).or_default().push(curve.clone());
                        }
                    }
                    Some(EstimatorOutcome::Failed { kind, message }) => failures.push(Failure {
                        scenario: scenario.name.clone(),
                        estimator: id,
                        replication: rep.replication,
                        kind: kind.clone(),
                        message: message.clone(),
                    }),
                    None => {}
                }
            }
            if est.is_empty() {
                continue;
            }
            let (mean, sd) = mean_sd(&est);
            let truth = truth.iter().sum::<f64>() / truth.len() as f64;
            let mut sorted = est.clone();
            sorted.sort_by(f64::total_cmp);
            summary.push(SummaryRow {
                scenario: scenario.name.clone(),
                estimator: id,
                n: est.len(),
                truth,
                mean,
                abs_bias: mean - truth,
                rel_bias: (truth.abs() > 1e-12).then(|| (mean - truth) / truth),
                sd,
                mc_se: sd / (est.len() as f64).sqrt(),
                q05: quantile(&sorted, 0.05),
                q25: quantile(&sorted, 0.25),
                q50: quantile(&sorted, 0.50),
                q75: quantile(&sorted, 0.75),
                q95: quantile(&sorted, 0.95),
            });
            for (e, (xs, ts, in_sample, reference)) in by_e {
                let (mean, sd) = mean_sd(&xs);
                event_study.push(EventRow {
                    scenario: scenario.name.clone(),
                    estimator: id,
                    e,
                    n: xs.len(),
                    mean,
                    sd,
                    truth: ts.iter().sum::<f64>() / ts.len() as f64,
                    in_sample,
                    reference,
                });
            }
        }
        for s in pretrend_report(&curves, plan.placebo_min_e) {
            pretrend.push(PretrendRow {
                scenario: scenario.name.clone(),
                summary: s,
            });
        }
    }
    SimulationReport {
        plan: plan.clone(),
        summary,
        event_study,
        pretrend,
        failures,
        replications,
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    File::create(&path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

/// Reproducibility record written next to the report files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub plan: BenchPlan,
    /// How replication seeds are derived.
    pub seed_lattice: String,
    pub cs_control: String,
}

impl Manifest {
    pub fn for_plan(plan: &BenchPlan) -> Self {
        Manifest {
            tool: "didlab".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            plan: plan.clone(),
            seed_lattice: format!(
                "replication r of every scenario draws from ChaCha20(seed = {}, stream = r)",
                plan.base_seed
            ),
            cs_control: plan.settings.cs_control.as_str().into(),
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }
}

pub const SUMMARY_FILE: &str = "summary.csv";
pub const EVENTSTUDY_FILE: &str = "eventstudy.csv";
pub const PRETREND_FILE: &str = "pretrend.csv";
pub const FAILURES_FILE: &str = "failures.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const REPLICATIONS_FILE: &str = "replications.jsonl";

/// Writes the report files into `out_dir` and returns their paths.
pub fn emit_report(report: &SimulationReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if report.plan.estimators.is_empty() {
        return Err(Error::EmptyPlan("estimators"));
    }
    if report.summary.is_empty() && report.failures.is_empty() {
        return Err(Error::EmptyPlan("results"));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut w = csv::Writer::from_writer(create(out_dir, SUMMARY_FILE)?);
    w.write_record([
        "scenario", "estimator", "n", "truth", "mean", "abs_bias", "rel_bias", "sd", "mc_se", "q05", "q25", "q50",
        "q75", "q95",
    ])?;
    for r in &report.summary {
        w.write_record([
            r.scenario.clone(),
            r.estimator.to_string(),
            r.n.to_string(),
            r.truth.to_string(),
            r.mean.to_string(),
            r.abs_bias.to_string(),
            opt(r.rel_bias),
            r.sd.to_string(),
            r.mc_se.to_string(),
            r.q05.to_string(),
            r.q25.to_string(),
            r.q50.to_string(),
            r.q75.to_string(),
            r.q95.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(out_dir.join(SUMMARY_FILE), e))?;

    let mut w = csv::Writer::from_writer(create(out_dir, EVENTSTUDY_FILE)?);
    w.write_record(["scenario", "estimator", "e", "n", "mean", "sd", "truth", "in_sample", "reference"])?;
    for r in &report.event_study {
        w.write_record([
            r.scenario.clone(),
            r.estimator.to_string(),
            r.e.to_string(),
            r.n.to_string(),
            r.mean.to_string(),
            r.sd.to_string(),
            r.truth.to_string(),
            r.in_sample.to_string(),
            r.reference.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(out_dir.join(EVENTSTUDY_FILE), e))?;

    let mut w = csv::Writer::from_writer(create(out_dir, PRETREND_FILE)?);
    w.write_record(["scenario", "estimator", "n_points", "mean_pre", "max_abs_pre", "flagged", "flagged_at"])?;
    for p in &report.pretrend {
        let s = &p.summary;
        let at: Vec<String> = s.flagged_at.iter().map(|e| e.to_string()).collect();
        w.write_record([
            p.scenario.clone(),
            s.estimator.clone(),
            s.n_points.to_string(),
            opt(s.mean_pre),
            opt(s.max_abs_pre),
            s.flagged.to_string(),
            at.join(";"),
        ])?;
    }
    w.flush().map_err(|e| Error::io(out_dir.join(PRETREND_FILE), e))?;

    let mut w = csv::Writer::from_writer(create(out_dir, FAILURES_FILE)?);
    w.write_record(["scenario", "estimator", "replication", "kind", "message"])?;
    for f in &report.failures {
        w.write_record([
            f.scenario.clone(),
            f.estimator.to_string(),
            f.replication.to_string(),
            f.kind.clone(),
            f.message.clone(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(out_dir.join(FAILURES_FILE), e))?;

    let manifest_path = out_dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&Manifest::for_plan(&report.plan))
        .map_err(|e| Error::Parse(e.to_string()))?;
    fs::write(&manifest_path, text + "\n").map_err(|e| Error::io(&manifest_path, e))?;

    let reps_path = out_dir.join(REPLICATIONS_FILE);
    let mut w = create(out_dir, REPLICATIONS_FILE)?;
    for r in &report.replications {
        let line = serde_json::to_string(r).map_err(|e| Error::Parse(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::io(&reps_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&reps_path, e))?;

    Ok([SUMMARY_FILE, EVENTSTUDY_FILE, PRETREND_FILE, FAILURES_FILE, MANIFEST_FILE, REPLICATIONS_FILE]
        .iter()
        .map(|f| out_dir.join(f))
        .collect())
}

/// Rebuilds a report from a directory written by [`emit_report`].
pub fn load_report(dir: &Path) -> Result<SimulationReport> {
    let manifest = Manifest::read(&dir.join(MANIFEST_FILE))?;
    let path = dir.join(REPLICATIONS_FILE);
    let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
    let mut replications = Vec::new();
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rep: ReplicationResult =
            serde_json::from_str(&line).map_err(|e| Error::Parse(format!("{}:{}: {e}", path.display(), k + 1)))?;
        replications.push(rep);
    }
    Ok(summarize(&manifest.plan, replications))
}
