use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{CompletionProvider, CompletionRequest, CompletionResult, ProviderError};

/// OpenAI-compatible chat-completions endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpChatConfig {
    /// e.g. `https://api.example.com/v1`; `/chat/completions` is appended.
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    pub max_backoff_ms: u64,
}

impl Default for HttpChatConfig {
    fn default() -> Self {
        HttpChatConfig {
            base_url: "http://127.0.0.1:8000/v1".into(),
            model: String::new(),
            api_key_env: "AUTOFORMAL_API_KEY".into(),
            timeout_secs: 120,
            max_retries: 3,
            backoff_base_ms: 500,
            max_backoff_ms: 30_000,
        }
    }
}

pub struct HttpChatProvider {
    name: String,
    config: HttpChatConfig,
    api_key: String,
    agent: ureq::Agent,
}

impl std::fmt::Debug for HttpChatProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpChatProvider")
            .field("name", &self.name)
            .field("config", &self.config)
            .field("api_key", &"<redacted>")
            .finish()
    }
}

impl HttpChatProvider {
    /// Reads the key from `config.api_key_env`; a missing or empty variable
    /// is an auth error.
    pub fn new(name: &str, config: HttpChatConfig) -> Result<Self, ProviderError> {
        let api_key = std::env::var(&config.api_key_env).unwrap_or_default();
        if api_key.trim().is_empty() {
            return Err(ProviderError::Auth {
                message: format!("environment variable {} is not set", config.api_key_env),
            });
        }
        Ok(Self::with_key(name, config, api_key))
    }

    pub(crate) fn with_key(name: &str, config: HttpChatConfig, api_key: String) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs.max(1))))
            .http_status_as_error(false)
            .build()
            .into();
        HttpChatProvider {
            name: name.to_string(),
            config,
            api_key,
            agent,
        }
    }

    pub fn config(&self) -> &HttpChatConfig {
        &self.config
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    pub fn request_body(&self, request: &CompletionRequest) -> Value {
        let mut body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.decoding.temperature,
            "max_tokens": request.decoding.max_tokens,
        });
        if !request.decoding.stop_sequences.is_empty() {
            body["stop"] = json!(request.decoding.stop_sequences);
        }
        body
    }

    fn attempt(&self, body: &Value) -> Result<(Value, u64), ProviderError> {
        tracing::debug!(
            target: "autoformal::llm",
            url = %self.endpoint(),
            authorization = "Bearer <redacted>",
            body = %body,
            "chat request"
        );
        let start = Instant::now();
        let mut response = self
            .agent
            .post(&self.endpoint())
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .header("Content-Type", "application/json")
            .send_json(body)
            .map_err(|e| ProviderError::Transport {
                message: redact(&e.to_string(), &self.api_key),
            })?;
        let status = response.status().as_u16();
        let retry_after = response
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<f64>().ok())
            .map(|s| (s * 1000.0) as u64);
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| ProviderError::Transport {
                message: e.to_string(),
            })?;
        let elapsed = start.elapsed().as_millis() as u64;
        tracing::debug!(target: "autoformal::llm", status, body = %redact(&text, &self.api_key), "chat response");
        if (200..300).contains(&status) {
            let value: Value = serde_json::from_str(&text).map_err(|e| ProviderError::Protocol {
                message: format!("response is not JSON: {e}"),
            })?;
            return Ok((value, elapsed));
        }
        let message = redact(&error_message(&text), &self.api_key);
        Err(match status {
            401 | 403 => ProviderError::Auth { message },
            402 => ProviderError::Quota { message },
            429 if message.contains("quota") => ProviderError::Quota { message },
            429 => ProviderError::RateLimited {
                retry_after_ms: retry_after,
            },
            400 | 413 if is_context_error(&message) => ProviderError::ContextTooLong { message },
            s if s >= 500 => ProviderError::Transport {
                message: format!("HTTP {s}: {message}"),
            },
            s => ProviderError::Protocol {
                message: format!("HTTP {s}: {message}"),
            },
        })
    }

    fn backoff(&self, attempt: u32, error: &ProviderError) -> Duration {
        if let Some(d) = error.retry_after() {
            return d.min(Duration::from_millis(self.config.max_backoff_ms));
        }
        let base = self.config.backoff_base_ms.saturating_mul(1 << attempt.min(16));
        let capped = base.min(self.config.max_backoff_ms);
        let jitter = rand::rng().random_range(0..=capped / 2 + 1);
        Duration::from_millis((capped / 2 + jitter).min(self.config.max_backoff_ms))
    }
}

impl CompletionProvider for HttpChatProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, ProviderError> {
        if request.prompt.is_empty() {
            return Err(ProviderError::Protocol {
                message: "empty prompt".into(),
            });
        }
        let body = self.request_body(request);
        let mut retries = 0;
        loop {
            match self.attempt(&body) {
                Ok((value, latency_ms)) => {
                    let mut result = parse_completion(&value, &self.name)?;
                    result.latency_ms = latency_ms;
                    result.retries = retries;
                    return Ok(result);
                }
                Err(e) if e.is_transient() && retries < self.config.max_retries => {
                    let pause = self.backoff(retries, &e);
                    tracing::warn!(target: "autoformal::llm", error = %e, ?pause, "retrying");
                    std::thread::sleep(pause);
                    retries += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

fn parse_completion(value: &Value, provider: &str) -> Result<CompletionResult, ProviderError> {
    let text = value
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| ProviderError::Protocol {
            message: "missing choices[0].message.content".into(),
        })?;
    let mut result = CompletionResult::text_only(provider, text.to_string());
    let usage = |k: &str| {
        value
            .pointer(&format!("/usage/{k}"))
            .and_then(Value::as_u64)
            .map(|n| n as u32)
    };
    result.prompt_tokens = usage("prompt_tokens");
    result.completion_tokens = usage("completion_tokens");
    if let Some(model) = value.get("model").and_then(Value::as_str) {
        result.metadata.insert("model".into(), model.into());
    }
    if let Some(reason) = value.pointer("/choices/0/finish_reason").and_then(Value::as_str) {
        result.metadata.insert("finish_reason".into(), reason.into());
    }
    Ok(result)
}

fn error_message(body: &str) -> String {
    serde_json::from_str::<Value>(body)
        .ok()
        .and_then(|v| {
            v.pointer("/error/message")
                .or_else(|| v.get("message"))
                .and_then(Value::as_str)
                .map(str::to_string)
        })
        .unwrap_or_else(|| body.chars().take(200).collect())
}

fn is_context_error(message: &str) -> bool {
    let m = message.to_ascii_lowercase();
    m.contains("context length") || m.contains("context_length") || m.contains("too many tokens")
}

fn redact(text: &str, key: &str) -> String {
    if key.is_empty() {
        text.to_string()
    } else {
        text.replace(key, "<redacted>")
    }
}
