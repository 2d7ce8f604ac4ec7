use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineError;
use crate::autosef::AutoSefConfig;
use crate::checker::{
    CheckContext, IsabelleServerConfig, OfflineChecker, OfflineOptions, ServerChecker,
    SymbolWhitelist, SyntaxChecker,
};
use crate::corpus::Dataset;
use crate::denoise::{CbdRules, DenoiseMode};
use crate::llm::{
    CompletionProvider, DecodingConfig, HttpChatConfig, HttpChatProvider, NoiseSpec,
    OracleProvider, ScriptedProvider,
};
use crate::metrics::{Embedder, HashEmbedder};
use crate::retrieval::{Bm25Params, IndexMode, QueryMode};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub name: String,
    /// Model label used in report tables.
    #[serde(default)]
    pub llm: String,
    /// Method label used in report tables; derived from the settings when
    /// empty.
    #[serde(default)]
    pub method: String,
    pub dataset: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// 0 is zero-shot and skips retrieval.
    #[serde(default = "default_shots")]
    pub shots: usize,
    /// Absent with `shots > 0`: the fixed exemplars are used instead.
    #[serde(default)]
    pub retrieval: Option<RetrievalConfig>,
    pub providers: ProviderMatrix,
    #[serde(default)]
    pub decoding: DecodingConfig,
    /// `cbd`, `1A`…`1D`, `1A+cbd`…`1D+cbd`; absent leaves raw outputs.
    #[serde(default)]
    pub denoise: Option<DenoiseMode>,
    #[serde(default)]
    pub cbd_rules: CbdRules,
    #[serde(default)]
    pub autosef: Option<AutoSefConfig>,
    #[serde(default)]
    pub checker: CheckerConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub templates_dir: Option<PathBuf>,
}

fn default_shots() -> usize {
    3
}

fn default_workers() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrievalConfig {
    #[serde(default = "default_query")]
    pub query_mode: QueryMode,
    #[serde(default = "default_index", with = "index_mode_str")]
    pub index_mode: IndexMode,
    /// Defaults to `shots`.
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub bm25: Bm25Params,
}

fn default_query() -> QueryMode {
    QueryMode::T
}

fn default_index() -> IndexMode {
    IndexMode::T
}

mod index_mode_str {
    use super::IndexMode;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(mode: &IndexMode, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(mode)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<IndexMode, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// One provider per model role. Missing roles fall back to
/// `autoformalize`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderMatrix {
    pub autoformalize: ProviderConfig,
    #[serde(default)]
    pub informalize: Option<ProviderConfig>,
    #[serde(default)]
    pub denoise: Option<ProviderConfig>,
    #[serde(default)]
    pub repair: Option<ProviderConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProviderConfig {
    /// Answers from the dataset's ground truth.
    Oracle {
        #[serde(default)]
        noise: NoiseSpec,
    },
    /// JSONL prompt table.
    Scripted { path: PathBuf },
    Http(HttpChatConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case", deny_unknown_fields)]
pub enum CheckerConfig {
    Offline {
        #[serde(default)]
        whitelist: Option<PathBuf>,
        #[serde(default = "yes")]
        strict_symbols: bool,
    },
    Server {
        #[serde(default)]
        server: IsabelleServerConfig,
        #[serde(default)]
        imports: Option<Vec<String>>,
    },
}

fn yes() -> bool {
    true
}

impl Default for CheckerConfig {
    fn default() -> Self {
        CheckerConfig::Offline {
            whitelist: None,
            strict_symbols: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    /// Embedding score with the built-in hash embedder.
    #[serde(default)]
    pub cbs: bool,
    #[serde(default = "default_dim")]
    pub embedding_dim: usize,
}

fn default_dim() -> usize {
    64
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            cbs: false,
            embedding_dim: default_dim(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let mut config = Self::from_toml(&text)?;
        config.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.dataset);
        if let Some(t) = &mut self.templates_dir {
            fix(t);
        }
        for p in [
            Some(&mut self.providers.autoformalize),
            self.providers.informalize.as_mut(),
            self.providers.denoise.as_mut(),
            self.providers.repair.as_mut(),
        ]
        .into_iter()
        .flatten()
        {
            if let ProviderConfig::Scripted { path } = p {
                fix(path);
            }
        }
        if let CheckerConfig::Offline {
            whitelist: Some(w), ..
        } = &mut self.checker
        {
            fix(w);
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.version != CONFIG_VERSION {
            return bad(format!("unsupported config version {} (expected {CONFIG_VERSION})", self.version));
        }
        if self.name.trim().is_empty() {
            return bad("`name` is empty".into());
        }
        if self.workers == 0 {
            return bad("`workers` must be at least 1".into());
        }
        if let Some(r) = &self.retrieval {
            if self.shots == 0 {
                return bad("retrieval is configured but `shots` is 0".into());
            }
            if let Some(k) = r.k {
                if k != self.shots {
                    return bad(format!("retrieval k = {k} differs from shots = {}", self.shots));
                }
            }
        }
        if let Some(a) = &self.autosef {
            if a.budget == 0 {
                return bad("autosef budget must be at least 1".into());
            }
        }
        if self.decoding.temperature < 0.0 || self.decoding.max_tokens == 0 {
            return bad("decoding needs temperature >= 0 and max_tokens >= 1".into());
        }
        for p in [
            Some(&self.providers.autoformalize),
            self.providers.informalize.as_ref(),
            self.providers.denoise.as_ref(),
            self.providers.repair.as_ref(),
        ]
        .into_iter()
        .flatten()
        {
            match p {
                ProviderConfig::Oracle { noise } => noise.validate().map_err(PipelineError::Config)?,
                ProviderConfig::Http(h) if h.model.trim().is_empty() => {
                    return bad("http provider needs a `model`".into())
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical_json(&value).as_bytes()))
    }

    pub fn k(&self) -> usize {
        self.retrieval
            .as_ref()
            .and_then(|r| r.k)
            .unwrap_or(self.shots)
    }

    /// `Zero-Shot`, `3-Shot`, `Query: T Index: T`, plus the denoise mode.
    pub fn method_label(&self) -> String {
        if !self.method.is_empty() {
            return self.method.clone();
        }
        let mut label = match (&self.retrieval, self.shots) {
            (_, 0) => "Zero-Shot".to_string(),
            (None, n) => format!("{n}-Shot"),
            (Some(r), _) => format!("Query: {} Index: {}", r.query_mode, r.index_mode),
        };
        if let Some(d) = self.denoise {
            label.push_str(&format!(" [{d}]"));
        }
        if let Some(a) = &self.autosef {
            label.push_str(&format!(" [auto-sef {}]", a.budget));
        }
        label
    }
}

/// JSON with object keys sorted at every level and no whitespace.
pub fn canonical_json(value: &serde_json::Value) -> String {
    use serde_json::Value;
    match value {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            let inner: Vec<String> = keys
                .into_iter()
                .map(|k| format!("{}:{}", Value::String(k.clone()), canonical_json(&map[k])))
                .collect();
            format!("{{{}}}", inner.join(","))
        }
        Value::Array(items) => {
            format!("[{}]", items.iter().map(canonical_json).collect::<Vec<_>>().join(","))
        }
        other => other.to_string(),
    }
}

pub fn build_provider(
    name: &str,
    config: &ProviderConfig,
    dataset: &Dataset,
) -> Result<Arc<dyn CompletionProvider>, PipelineError> {
    Ok(match config {
        ProviderConfig::Oracle { noise } => {
            Arc::new(OracleProvider::from_dataset(name, dataset, noise.clone()))
        }
        ProviderConfig::Scripted { path } => Arc::new(
            ScriptedProvider::load(name, path).map_err(|e| PipelineError::Config(e.to_string()))?,
        ),
        ProviderConfig::Http(h) => Arc::new(
            HttpChatProvider::new(name, h.clone()).map_err(|e| PipelineError::Config(e.to_string()))?,
        ),
    })
}

/// Providers for the four model roles.
pub struct Providers {
    pub autoformalize: Arc<dyn CompletionProvider>,
    pub informalize: Arc<dyn CompletionProvider>,
    pub denoise: Arc<dyn CompletionProvider>,
    pub repair: Arc<dyn CompletionProvider>,
}

impl Providers {
    pub fn from_config(matrix: &ProviderMatrix, dataset: &Dataset) -> Result<Self, PipelineError> {
        let auto = build_provider("autoformalize", &matrix.autoformalize, dataset)?;
        let role = |name: &str, c: &Option<ProviderConfig>| match c {
            Some(c) => build_provider(name, c, dataset),
            None => Ok(auto.clone()),
        };
        Ok(Providers {
            informalize: role("informalize", &matrix.informalize)?,
            denoise: role("denoise", &matrix.denoise)?,
            repair: role("repair", &matrix.repair)?,
            autoformalize: auto,
        })
    }

    /// The same provider for every role.
    pub fn uniform(provider: Arc<dyn CompletionProvider>) -> Self {
        Providers {
            autoformalize: provider.clone(),
            informalize: provider.clone(),
            denoise: provider.clone(),
            repair: provider,
        }
    }
}

pub fn build_checker(config: &CheckerConfig) -> Result<Arc<dyn SyntaxChecker>, PipelineError> {
    Ok(match config {
        CheckerConfig::Offline {
            whitelist,
            strict_symbols,
        } => {
            let wl = match whitelist {
                Some(p) => SymbolWhitelist::load(p).map_err(|e| PipelineError::Config(e.to_string()))?,
                None => SymbolWhitelist::default(),
            };
            Arc::new(OfflineChecker::new(
                wl,
                OfflineOptions {
                    strict_symbols: *strict_symbols,
                },
            ))
        }
        CheckerConfig::Server { server, imports } => {
            let mut ctx = CheckContext::default();
            if let Some(i) = imports {
                ctx.imports = i.clone();
            }
            Arc::new(
                ServerChecker::new(server.clone(), ctx)
                    .map_err(|e| PipelineError::Config(e.to_string()))?,
            )
        }
    })
}

pub fn build_embedder(config: &MetricsConfig) -> Option<Arc<dyn Embedder>> {
    config.cbs.then(|| {
        Arc::new(HashEmbedder {
            dim: config.embedding_dim.max(1),
        }) as Arc<dyn Embedder>
    })
}
