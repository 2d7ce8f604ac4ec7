use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{CompletionProvider, CompletionRequest, CompletionResult, ProviderError};

/// One line of a script file: a prompt and either its response or the
/// error the provider should raise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ProviderError>,
}

/// Answers from an exact prompt-to-response table.
#[derive(Debug, Default)]
pub struct ScriptedProvider {
    name: String,
    table: HashMap<String, Result<String, ProviderError>>,
    calls: AtomicUsize,
}

impl ScriptedProvider {
    pub fn new(name: &str) -> Self {
        ScriptedProvider {
            name: name.to_string(),
            ..Default::default()
        }
    }

    pub fn with_response(mut self, prompt: &str, response: &str) -> Self {
        self.insert(prompt, Ok(response.to_string()));
        self
    }

    pub fn with_error(mut self, prompt: &str, error: ProviderError) -> Self {
        self.insert(prompt, Err(error));
        self
    }

    pub fn insert(&mut self, prompt: &str, outcome: Result<String, ProviderError>) {
        self.table.insert(prompt.to_string(), outcome);
    }

    pub fn from_entries(name: &str, entries: impl IntoIterator<Item = ScriptEntry>) -> Self {
        let mut p = ScriptedProvider::new(name);
        for e in entries {
            let outcome = match (e.response, e.error) {
                (_, Some(err)) => Err(err),
                (Some(text), None) => Ok(text),
                (None, None) => Err(ProviderError::unavailable("script entry has no response")),
            };
            p.insert(&e.prompt, outcome);
        }
        p
    }

    /// Reads a JSONL script, one [`ScriptEntry`] per line.
    pub fn load(name: &str, path: &Path) -> Result<Self, ProviderError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ProviderError::unavailable(format!("{}: {e}", path.display())))?;
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: ScriptEntry = serde_json::from_str(line).map_err(|e| {
                ProviderError::unavailable(format!("{}:{}: {e}", path.display(), n + 1))
            })?;
            entries.push(entry);
        }
        Ok(Self::from_entries(name, entries))
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

impl CompletionProvider for ScriptedProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, ProviderError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        match self.table.get(&request.prompt) {
            Some(Ok(text)) => Ok(CompletionResult::text_only(&self.name, text.clone())),
            Some(Err(e)) => Err(e.clone()),
            None => Err(ProviderError::unavailable("unscripted prompt")),
        }
    }
}

/// Passes requests through and remembers every exchange, so a run against
/// any provider can be frozen into a script.
pub struct RecordingProvider<P> {
    inner: P,
    log: Mutex<Vec<ScriptEntry>>,
}

impl<P: CompletionProvider> RecordingProvider<P> {
    pub fn new(inner: P) -> Self {
        RecordingProvider {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn entries(&self) -> Vec<ScriptEntry> {
        self.log.lock().expect("log lock").clone()
    }

    pub fn to_script(&self, name: &str) -> ScriptedProvider {
        ScriptedProvider::from_entries(name, self.entries())
    }

    pub fn save_script(&self, path: &Path) -> std::io::Result<()> {
        let mut file = fs::File::create(path)?;
        for entry in self.entries() {
            let line = serde_json::to_string(&entry).map_err(std::io::Error::other)?;
            writeln!(file, "{line}")?;
        }
        Ok(())
    }
}

impl<P: CompletionProvider> CompletionProvider for RecordingProvider<P> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, ProviderError> {
        let outcome = self.inner.complete(request);
        let entry = ScriptEntry {
            prompt: request.prompt.clone(),
            response: outcome.as_ref().ok().map(|r| r.text.clone()),
            error: outcome.as_ref().err().cloned(),
        };
        self.log.lock().expect("log lock").push(entry);
        outcome
    }
}
