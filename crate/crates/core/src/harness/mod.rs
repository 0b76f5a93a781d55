//! Monte Carlo harness: plans, replication runner, report files and presets.

mod plan;
mod presets;
mod report;
mod run;

pub use plan::{BenchPlan, EstimatorId, EstimatorSettings, DEFAULT_REPS, MC_DEFAULT_REPS};
pub use presets::{load_preset, preset_names, LoadedPreset, PRESET_FILES};
pub use report::{
    emit_report, load_report, EventRow, Failure, Manifest, PretrendRow, SimulationReport, SummaryRow, EVENTSTUDY_FILE,
    FAILURES_FILE, MANIFEST_FILE, PRETREND_FILE, REPLICATIONS_FILE, SUMMARY_FILE,
};
pub use run::{
    run_bench, run_bench_with, run_estimator, run_replication, EstimatorOutcome, EstimatorOutput, ReplicationResult,
    Schedule, WORKERS_ENV,
};
