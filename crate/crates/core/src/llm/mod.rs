//! Text completion providers.
//!
//! Every model role in the pipeline (autoformalization, informalization,
//! prompt-based denoising, repair) goes through [`CompletionProvider`].
//! Besides the HTTP chat provider there are two deterministic doubles: a
//! scripted prompt table and an oracle that answers from ground truth with
//! seeded noise.

mod http;
mod oracle;
mod scripted;

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use http::{HttpChatConfig, HttpChatProvider};
pub use oracle::{NoiseSpec, OracleProvider, OracleTruth};
pub use scripted::{RecordingProvider, ScriptEntry, ScriptedProvider};

use crate::checker::SyntaxDiagnostic;
use crate::prompts::{PromptFamily, RenderedPrompt};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodingConfig {
    /// 0 is greedy decoding.
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default)]
    pub stop_sequences: Vec<String>,
}

impl Default for DecodingConfig {
    fn default() -> Self {
        DecodingConfig {
            temperature: 0.0,
            max_tokens: 512,
            stop_sequences: Vec::new(),
        }
    }
}

impl DecodingConfig {
    pub fn is_greedy(&self) -> bool {
        self.temperature == 0.0
    }
}

/// Context that test providers use to answer; remote providers ignore it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RequestHints {
    pub family: Option<PromptFamily>,
    pub item_id: Option<String>,
    /// The code a denoising or repair prompt asks about.
    pub input_code: Option<String>,
    pub diagnostic: Option<SyntaxDiagnostic>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub decoding: DecodingConfig,
    /// Provider name, for logs.
    #[serde(default)]
    pub provider: String,
    #[serde(default)]
    pub hints: RequestHints,
}

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>) -> Self {
        CompletionRequest {
            prompt: prompt.into(),
            decoding: DecodingConfig::default(),
            provider: String::new(),
            hints: RequestHints::default(),
        }
    }

    pub fn from_prompt(prompt: &RenderedPrompt, decoding: DecodingConfig) -> Self {
        CompletionRequest {
            prompt: prompt.text.clone(),
            decoding,
            provider: String::new(),
            hints: RequestHints {
                family: Some(prompt.family),
                ..RequestHints::default()
            },
        }
    }

    pub fn for_item(mut self, id: &str) -> Self {
        self.hints.item_id = Some(id.to_string());
        self
    }

    pub fn with_input(mut self, code: &str) -> Self {
        self.hints.input_code = Some(code.to_string());
        self
    }

    pub fn with_diagnostic(mut self, diag: &SyntaxDiagnostic) -> Self {
        self.hints.diagnostic = Some(diag.clone());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResult {
    /// Exactly what the model returned.
    pub text: String,
    pub latency_ms: u64,
    pub prompt_tokens: Option<u32>,
    pub completion_tokens: Option<u32>,
    pub provider: String,
    pub retries: u32,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl CompletionResult {
    pub fn text_only(provider: &str, text: String) -> Self {
        CompletionResult {
            text,
            latency_ms: 0,
            prompt_tokens: None,
            completion_tokens: None,
            provider: provider.to_string(),
            retries: 0,
            metadata: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProviderError {
    #[error("provider unavailable: {message}")]
    Unavailable { message: String },
    #[error("rate limited")]
    RateLimited {
        #[serde(default)]
        retry_after_ms: Option<u64>,
    },
    #[error("prompt exceeds the model context: {message}")]
    ContextTooLong { message: String },
    #[error("authentication failed: {message}")]
    Auth { message: String },
    #[error("transport error: {message}")]
    Transport { message: String },
    #[error("quota exhausted: {message}")]
    Quota { message: String },
    #[error("malformed provider response: {message}")]
    Protocol { message: String },
}

impl ProviderError {
    pub fn unavailable(message: impl Into<String>) -> Self {
        ProviderError::Unavailable {
            message: message.into(),
        }
    }

    /// Worth retrying after a pause.
    pub fn is_transient(&self) -> bool {
        matches!(
            self,
            ProviderError::RateLimited { .. } | ProviderError::Transport { .. }
        )
    }

    pub fn retry_after(&self) -> Option<Duration> {
        match self {
            ProviderError::RateLimited {
                retry_after_ms: Some(ms),
            } => Some(Duration::from_millis(*ms)),
            _ => None,
        }
    }
}

pub trait CompletionProvider: Send + Sync {
    fn name(&self) -> &str;

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, ProviderError>;
}

impl<P: CompletionProvider + ?Sized> CompletionProvider for std::sync::Arc<P> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, ProviderError> {
        (**self).complete(request)
    }
}

impl<P: CompletionProvider + ?Sized> CompletionProvider for Box<P> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, ProviderError> {
        (**self).complete(request)
    }
}
