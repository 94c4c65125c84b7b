//! Experiment runner and reporting.
//!
//! A run directory holds `config.toml`, `status.json`, the pretrained models
//! under `pretrain/`, one JSON line per episode in `metrics.jsonl`, planner
//! diagnostics in `planner_trace.jsonl` when exploring by trajectory
//! optimization, and agent/dynamics checkpoints under `checkpoints/`.
//! [`report`] aggregates finished runs into learning-curve PNGs and a CSV
//! success table.

mod config;
mod metrics;
mod plot;
mod report;
mod run;
mod stats;

pub use config::{DemoConfig, ExperimentConfig, ExplorerKind};
pub use metrics::{read_jsonl, read_metrics, EpisodeRecord, JsonlWriter, Stream, TraceRecord, METRICS_FILE, TRACE_FILE};
pub use plot::Series;
pub use report::{aggregate, load_run, report, success_table, Curve, MethodSummary, Report, RunData, TABLE_FILE};
pub use run::{
    checkpoint_dir, evaluate_checkpoint, generate_demos, pretrain, pretrain_from, run_experiment, train,
    PretrainSummary, Pretrained, RunOutcome, RunState, RunStatus, CHECKPOINT_DIR, CONFIG_FILE, PRETRAIN_DIR,
    STATUS_FILE,
};
pub use stats::{best_window, mean_std, smooth, success_rate, SuccessRate, SUCCESS_WINDOW};

/// Overrides the output directory of CLI runs.
pub const ENV_OUT_DIR: &str = "LATO_OUT_DIR";
/// Caps the number of replicas run concurrently by the CLI.
pub const ENV_THREADS: &str = "LATO_THREADS";
