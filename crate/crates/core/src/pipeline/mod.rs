//! End-to-end experiments: configuration, the per-item stage sequence,
//! append-only run records, evaluation and run comparison.

mod compare;
mod config;
mod record;
mod run;

pub use compare::{compare_runs, delta_cents, format_cents, paired_cell, render_paired, ComparisonTable, PairedRow, RunSummary};
pub use config::{
    build_checker, build_embedder, build_provider, canonical_json, CheckerConfig,
    ExperimentConfig, MetricsConfig, ProviderConfig, ProviderMatrix, Providers, RetrievalConfig,
    CONFIG_VERSION,
};
pub use record::{
    read_run, ItemRecord, ItemStatus, OutputStage, ProviderCalls, RunHeader, RunRecord, Stage,
    RUN_FORMAT, RUN_VERSION,
};
pub use run::{evaluate_run, process_item, run_experiment, Experiment, ExitStatus, RunOptions, RunOutcome};

use crate::corpus::CorpusError;
use crate::metrics::MetricError;
use crate::prompts::PromptError;
use crate::retrieval::RetrievalError;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("dataset: {0}")]
    Dataset(#[from] CorpusError),
    #[error("retrieval: {0}")]
    Retrieval(#[from] RetrievalError),
    #[error("templates: {0}")]
    Prompt(#[from] PromptError),
    #[error("run record: {0}")]
    Record(String),
    /// Carries the config hashes of the two runs.
    #[error("runs {a} and {b} were evaluated on different test splits")]
    SplitMismatch { a: String, b: String },
    #[error("metrics: {0}")]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl PipelineError {
    /// 2 for configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::Prompt(_) => 2,
            _ => 1,
        }
    }
}
