//! Experiment orchestration: TOML configuration, lockstep decentralized
//! training, greedy evaluation, CSV metrics and cross-seed aggregation.

mod aggregate;
mod config;
mod metrics;
mod policy;
mod run;
mod stats;

pub use aggregate::{aggregate, RunSummary, SummaryRow};
pub use config::{AgentConfig, ExperimentConfig, RunConfig};
pub use metrics::{read_metrics, MetricsRow, MetricsWriter, COLUMNS, SCHEMA_COMMENT};
pub use policy::{evaluate, EvalResult, GreedyPolicy, Policy, RandomPolicy, ScriptedMeetingPolicy};
pub use run::{
    checkpoint_path, csv_path, evaluate_learners, load_checkpoint, run, run_seed, Precision, RunRecord, SeedOutcome,
};
pub use stats::{eval_seed, mean_std, spearman, splitmix64, sub_seed, Stream};
