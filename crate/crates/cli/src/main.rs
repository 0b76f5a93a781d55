//! `didlab` command-line front end.
//!
//! Every failure ends with one JSON line on stderr,
//! `{"error":{"kind":...,"message":...}}`, and a nonzero exit status.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use didlab::dgp::{generate_panel, write_truth_csv, Timing};
use didlab::fe::SaControl;
use didlab::grouptime::{bacon_decompose, write_bacon_csv, ControlGroup};
use didlab::harness::{
    emit_report, load_preset, load_report, run_bench, run_estimator, BenchPlan, EstimatorId, EstimatorSettings,
    Manifest, DEFAULT_REPS,
};
use didlab::impute::LambdaGrid;
use didlab::panel::PanelDataset;
use serde_json::json;

#[derive(Parser)]
#[command(name = "didlab", version, about = "Staggered difference-in-differences simulator and estimators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate panels and truth tables for every scenario of a preset.
    Simulate(SimulateArgs),
    /// Run one estimator on a panel CSV and print JSON.
    Estimate(EstimateArgs),
    /// Run a Monte Carlo plan and write report files.
    Bench(BenchArgs),
    /// Goodman-Bacon decomposition of the static TWFE coefficient, as CSV.
    Decompose(DecomposeArgs),
    /// Rebuild summary files from a stored replications.jsonl.
    Report(ReportArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Preset name (table1, setup4, figure2-grid, ...) or path to a preset file.
    #[arg(long)]
    preset: String,
    /// Only this scenario of the preset.
    #[arg(long)]
    scenario: Option<String>,
    /// Defaults to each scenario's own seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Draw onsets period by period instead of from a rounded normal.
    #[arg(long)]
    timing_literal: bool,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    estimator: EstimatorId,
    #[arg(long)]
    panel: PathBuf,
    /// Event-study window `L,K`: leads binned at -L, lags at K.
    #[arg(long, value_parser = parse_window)]
    window: Option<(u32, u32)>,
    /// never | lasttreated (sa); never | notyet | both (cs).
    #[arg(long)]
    control: Option<String>,
    /// Periods of anticipation allowed for by the group-time base period.
    #[arg(long, default_value_t = 0)]
    anticipation: u32,
    /// Pre-treatment depth of imputation placebo points.
    #[arg(long, default_value_t = 5)]
    leads: u32,
    /// `auto:POINTS[:RATIO]` or comma-separated penalty values.
    #[arg(long, value_parser = parse_grid)]
    mc_lambda_grid: Option<LambdaGrid>,
    #[arg(long)]
    mc_folds: Option<usize>,
    #[arg(long)]
    mc_tol: Option<f64>,
    /// Seed for the cross-validation folds.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, required_unless_present = "manifest")]
    preset: Option<String>,
    #[arg(long, default_value_t = DEFAULT_REPS)]
    reps: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated subset of twfe,twfe-es,sa,cs,bjs,mc,etwfe.
    #[arg(long, value_delimiter = ',')]
    estimators: Option<Vec<EstimatorId>>,
    /// Replications for matrix completion.
    #[arg(long)]
    mc_reps: Option<usize>,
    /// Control group for the group-time estimator.
    #[arg(long, default_value = "never")]
    cs_control: String,
    /// Re-run the exact plan recorded in a manifest.json; other plan flags are ignored.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct DecomposeArgs {
    #[arg(long)]
    panel: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory holding manifest.json and replications.jsonl.
    #[arg(long)]
    from: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug)]
struct CliError {
    kind: String,
    message: String,
}

impl From<didlab::Error> for CliError {
    fn from(e: didlab::Error) -> Self {
        CliError {
            kind: e.kind().into(),
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> CliError {
    CliError {
        kind: "Usage".into(),
        message: message.into(),
    }
}

fn io_error(path: &Path, e: io::Error) -> CliError {
    CliError {
        kind: "Io".into(),
        message: format!("{}: {e}", path.display()),
    }
}

fn parse_window(s: &str) -> Result<(u32, u32), String> {
    let (l, k) = s.split_once(',').ok_or("expected L,K")?;
    let parse = |v: &str| v.trim().parse::<u32>().map_err(|e| format!("{v:?}: {e}"));
    Ok((parse(l)?, parse(k)?))
}

fn parse_grid(s: &str) -> Result<LambdaGrid, String> {
    if let Some(rest) = s.strip_prefix("auto:") {
        let mut parts = rest.split(':');
        let points = parts
            .next()
            .unwrap_or_default()
            .parse::<usize>()
            .map_err(|e| format!("points: {e}"))?;
        let ratio = parts.next().map_or(Ok(1000.0), |r| r.parse::<f64>().map_err(|e| format!("ratio: {e}")))?;
        return Ok(LambdaGrid::Auto { points, ratio });
    }
    let values = s
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(LambdaGrid::Explicit { values })
}

fn parse_cs_control(s: &str) -> Result<ControlGroup, CliError> {
    match s {
        "never" => Ok(ControlGroup::NeverTreated),
        "notyet" => Ok(ControlGroup::NotYetTreated),
        "both" => Ok(ControlGroup::Both),
        _ => Err(usage(format!("--control/--cs-control {s:?}: expected never, notyet or both"))),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| io_error(path, e))
}

fn simulate(a: SimulateArgs) -> Result<(), CliError> {
    let preset = load_preset(&a.preset)?;
    let mut scenarios = preset.scenarios;
    if let Some(name) = &a.scenario {
        scenarios.retain(|s| &s.name == name);
        if scenarios.is_empty() {
            return Err(usage(format!("--scenario {name:?} is not in preset {:?}", a.preset)));
        }
    }
    std::fs::create_dir_all(&a.out).map_err(|e| io_error(&a.out, e))?;
    for mut s in scenarios {
        if a.timing_literal {
            s.timing = match s.timing {
                Timing::Distributed { mean, sd, late_from } => Timing::Literal { mean, sd, late_from },
                other => other,
            };
        }
        let gp = generate_panel(&s, a.seed.unwrap_or(s.seed))?;
        let panel_path = a.out.join(format!("{}_panel.csv", s.name));
        let truth_path = a.out.join(format!("{}_truth.csv", s.name));
        let mut w = create(&panel_path)?;
        gp.panel.write_csv(&mut w)?;
        w.flush().map_err(|e| io_error(&panel_path, e))?;
        let mut w = create(&truth_path)?;
        write_truth_csv(&gp, &mut w)?;
        w.flush().map_err(|e| io_error(&truth_path, e))?;
        println!("{}", panel_path.display());
        println!("{}", truth_path.display());
    }
    Ok(())
}

fn estimate(a: EstimateArgs) -> Result<(), CliError> {
    let panel = PanelDataset::read_csv_path(&a.panel)?;
    let mut settings = EstimatorSettings {
        es_window: a.window,
        anticipation: a.anticipation,
        placebo_leads: a.leads,
        ..EstimatorSettings::default()
    };
    settings.mc = didlab::impute::McConfig::default();
    settings.mc.cv_seed = a.seed;
    if let Some(grid) = a.mc_lambda_grid {
        settings.mc.lambda_grid = grid;
    }
    if let Some(f) = a.mc_folds {
        settings.mc.folds = f;
    }
    if let Some(t) = a.mc_tol {
        settings.mc.tol = t;
    }
    settings.mc.validate()?;
    if let Some(c) = &a.control {
        match a.estimator {
            EstimatorId::Sa => {
                settings.sa_control = match c.as_str() {
                    "never" => SaControl::NeverTreated,
                    "lasttreated" => SaControl::LastTreatedCohort,
                    _ => return Err(usage(format!("--control {c:?}: expected never or lasttreated for sa"))),
                }
            }
            EstimatorId::Cs => settings.cs_control = parse_cs_control(c)?,
            other => return Err(usage(format!("--control does not apply to {other}"))),
        }
    }
    if a.window.is_some() && a.estimator != EstimatorId::TwfeEs {
        return Err(usage(format!("--window does not apply to {}", a.estimator)));
    }
    let out = run_estimator(a.estimator, &panel, &settings)?;
    let curve: Vec<_> = out
        .curve
        .iter()
        .flat_map(|c| {
            c.points.iter().map(|(&e, p)| {
                json!({
                    "e": e,
                    "value": p.estimate,
                    "in_sample": p.in_sample,
                    "reference": c.reference.contains(&e),
                })
            })
        })
        .collect();
    let doc = json!({
        "estimator": a.estimator.as_str(),
        "overall": out.overall,
        "curve": curve,
        "lambda_star": out.lambda_star,
    });
    let text = serde_json::to_string_pretty(&doc).expect("json values serialize") + "\n";
    match &a.out {
        Some(path) => std::fs::write(path, text).map_err(|e| io_error(path, e)),
        None => io::stdout().write_all(text.as_bytes()).map_err(|e| io_error(Path::new("<stdout>"), e)),
    }
}

fn bench(a: BenchArgs) -> Result<(), CliError> {
    let plan = match &a.manifest {
        Some(path) => Manifest::read(path)?.plan,
        None => {
            let preset = load_preset(a.preset.as_deref().unwrap_or_default())?;
            let estimators = a.estimators.clone().unwrap_or_else(|| EstimatorId::ALL.to_vec());
            let mut plan = BenchPlan::new(preset.scenarios, estimators, a.reps, a.seed);
            plan.preset_hashes = preset.hashes;
            if let Some(n) = a.mc_reps {
                plan.rep_override.insert(EstimatorId::Mc, n);
            }
            plan.settings.cs_control = parse_cs_control(&a.cs_control)?;
            plan
        }
    };
    let report = run_bench(&plan)?;
    for path in emit_report(&report, &a.out)? {
        println!("{}", path.display());
    }
    if !report.failures.is_empty() {
        eprintln!("{} estimator runs failed; see failures.csv", report.failures.len());
    }
    Ok(())
}

fn decompose(a: DecomposeArgs) -> Result<(), CliError> {
    let panel = PanelDataset::read_csv_path(&a.panel)?;
    let d = bacon_decompose(&panel)?;
    match &a.out {
        Some(path) => {
            let mut w = create(path)?;
            write_bacon_csv(&d, &mut w)?;
            w.flush().map_err(|e| io_error(path, e))
        }
        None => Ok(write_bacon_csv(&d, io::stdout().lock())?),
    }
}

fn report(a: ReportArgs) -> Result<(), CliError> {
    let report = load_report(&a.from)?;
    for path in emit_report(&report, &a.out)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn fail(e: CliError, code: u8) -> ExitCode {
    let line = json!({ "error": { "kind": e.kind, "message": e.message } });
    eprintln!("{line}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            let message = e.render().to_string();
            let first = message.lines().next().unwrap_or_default().trim_start_matches("error: ");
            return fail(usage(first), 2);
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Estimate(a) => estimate(a),
        Command::Bench(a) => bench(a),
        Command::Decompose(a) => decompose(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = if e.kind == "Usage" { 2 } else { 1 };
            fail(e, code)
        }
    }
}
