//! Autoformalization experiments for Isabelle/ZF: corpus extraction,
//! retrieval of few-shot exemplars, prompting, output denoising, syntax
//! checking, error-driven repair, metrics and run bookkeeping.

pub mod autosef;
pub mod checker;
pub mod corpus;
pub mod denoise;
pub mod faults;
pub mod isar;
pub mod llm;
pub mod metrics;
pub mod pipeline;
pub mod prompts;
pub mod retrieval;
pub mod synth;

pub use autosef::{AutoSefConfig, RefinementTrace, StopReason};
pub use checker::{OfflineChecker, Severity, SyntaxChecker, SyntaxDiagnostic};
pub use corpus::{CorpusItem, Dataset, ItemKind, Split};
pub use denoise::{cbd, DenoiseMode};
pub use llm::{CompletionProvider, CompletionRequest, CompletionResult, DecodingConfig, ProviderError};
pub use metrics::{EvaluationReport, MetricVector};
pub use pipeline::{ExitStatus, ExperimentConfig, PipelineError, RunRecord};
pub use prompts::{Exemplar, PbdVariant, PromptFamily, TemplateSet};
pub use retrieval::{IndexMode, KnowledgeBaseIndex, QueryMode, RetrievalHit};
