//! Completion backends: `complete(system, user) -> text`.

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::LLM_API_KEY_ENV;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BackendError {
    #[error("completion request timed out")]
    Timeout,
    #[error("completion endpoint returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("completion transport error: {0}")]
    Transport(String),
    #[error("completion response has an unexpected shape: {0}")]
    MalformedResponse(String),
    #[error("environment variable {0} is not set; export your API key there to use the HTTP backend")]
    MissingApiKey(&'static str),
    #[error("no script entry matches the prompt")]
    NoScriptMatch,
    #[error("scripted failure: {0}")]
    Scripted(String),
    #[error("invalid backend configuration: {0}")]
    Config(String),
}

impl BackendError {
    fn retryable(&self) -> bool {
        match self {
            BackendError::Timeout | BackendError::Transport(_) => true,
            BackendError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

/// Anything that can answer a chat-style prompt. Implementations must be
/// safe to call from several threads at once.
pub trait CompletionBackend: Send + Sync {
    fn complete(&self, system_prompt: &str, user_prompt: &str) -> Result<String, BackendError>;
}

impl<B: CompletionBackend + ?Sized> CompletionBackend for std::sync::Arc<B> {
    fn complete(&self, system_prompt: &str, user_prompt: &str) -> Result<String, BackendError> {
        (**self).complete(system_prompt, user_prompt)
    }
}

impl<B: CompletionBackend + ?Sized> CompletionBackend for &B {
    fn complete(&self, system_prompt: &str, user_prompt: &str) -> Result<String, BackendError> {
        (**self).complete(system_prompt, user_prompt)
    }
}

fn default_timeout() -> f64 {
    30.0
}

fn default_retries() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpBackendConfig {
    pub url: String,
    pub model: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    /// Extra attempts after a timeout, transport error or 5xx; at most 1.
    #[serde(default = "default_retries")]
    pub retries: u32,
}

impl HttpBackendConfig {
    pub fn new(url: impl Into<String>, model: impl Into<String>) -> Self {
        HttpBackendConfig {
            url: url.into(),
            model: model.into(),
            timeout_secs: default_timeout(),
            retries: default_retries(),
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.url.trim().is_empty() {
            return Err(BackendError::Config("url is empty".into()));
        }
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return Err(BackendError::Config("timeout must be positive".into()));
        }
        if self.retries > 1 {
            return Err(BackendError::Config("at most one retry is allowed".into()));
        }
        Ok(())
    }
}

/// Generic chat-completion endpoint: POST `{"model","messages"}`, read
/// `choices[0].message.content`.
pub struct HttpBackend {
    config: HttpBackendConfig,
    api_key: String,
    client: reqwest::blocking::Client,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend").field("config", &self.config).finish_non_exhaustive()
    }
}

impl HttpBackend {
    /// Reads the API key from the environment.
    pub fn from_env(config: HttpBackendConfig) -> Result<Self, BackendError> {
        let key = std::env::var(LLM_API_KEY_ENV)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or(BackendError::MissingApiKey(LLM_API_KEY_ENV))?;
        Self::with_key(config, key)
    }

    pub fn with_key(config: HttpBackendConfig, api_key: String) -> Result<Self, BackendError> {
        config.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(HttpBackend { config, api_key, client })
    }

    pub fn config(&self) -> &HttpBackendConfig {
        &self.config
    }

    fn attempt(&self, body: &Value) -> Result<String, BackendError> {
        let resp = self
            .client
            .post(&self.config.url)
            .bearer_auth(&self.api_key)
            .json(body)
            .send()
            .map_err(transport_error)?;
        let status = resp.status();
        let text = resp.text().map_err(transport_error)?;
        if !status.is_success() {
            return Err(BackendError::Status {
                status: status.as_u16(),
                body: text.chars().take(500).collect(),
            });
        }
        extract_content(&text)
    }
}

fn transport_error(e: reqwest::Error) -> BackendError {
    if e.is_timeout() {
        BackendError::Timeout
    } else {
        BackendError::Transport(e.to_string())
    }
}

/// Pulls `choices[0].message.content` out of a chat-completion response.
pub fn extract_content(body: &str) -> Result<String, BackendError> {
    let v: Value = serde_json::from_str(body).map_err(|e| BackendError::MalformedResponse(e.to_string()))?;
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| BackendError::MalformedResponse("missing choices[0].message.content".into()))
}

impl CompletionBackend for HttpBackend {
    fn complete(&self, system_prompt: &str, user_prompt: &str) -> Result<String, BackendError> {
        let body = json!({
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": system_prompt},
                {"role": "user", "content": user_prompt},
            ],
        });
        let mut result = self.attempt(&body);
        for _ in 0..self.config.retries.min(1) {
            match &result {
                Err(e) if e.retryable() => {
                    log::warn!("completion failed ({e}), retrying once");
                    result = self.attempt(&body);
                }
                _ => break,
            }
        }
        result
    }
}

/// One scripted reply. An entry applies when `digest` equals the SHA-256 of
/// the user prompt or `match` is a substring of it. `error` makes the entry
/// fail instead of answering (`"timeout"` maps to a timeout).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(rename = "match", default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub digest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ScriptEntry {
    pub fn matching(pattern: &str, response: &str) -> Self {
        ScriptEntry {
            pattern: Some(pattern.into()),
            response: Some(response.into()),
            ..Default::default()
        }
    }

    pub fn failing(pattern: &str, error: &str) -> Self {
        ScriptEntry {
            pattern: Some(pattern.into()),
            error: Some(error.into()),
            ..Default::default()
        }
    }

    fn applies(&self, user_prompt: &str, digest: &str) -> bool {
        self.digest.as_deref().is_some_and(|d| d.eq_ignore_ascii_case(digest))
            || self.pattern.as_deref().is_some_and(|p| user_prompt.contains(p))
    }
}

/// Deterministic offline backend driven by a script; first applicable
/// entry wins, no entry is a failure.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScriptedBackend {
    entries: Vec<ScriptEntry>,
}

pub fn prompt_digest(user_prompt: &str) -> String {
    hex::encode(Sha256::digest(user_prompt.as_bytes()))
}

impl ScriptedBackend {
    pub fn new(entries: Vec<ScriptEntry>) -> Result<Self, BackendError> {
        for (i, e) in entries.iter().enumerate() {
            if e.pattern.is_none() && e.digest.is_none() {
                return Err(BackendError::Config(format!("script entry {i} has neither `match` nor `digest`")));
            }
            if e.response.is_none() && e.error.is_none() {
                return Err(BackendError::Config(format!("script entry {i} has neither `response` nor `error`")));
            }
        }
        Ok(ScriptedBackend { entries })
    }

    pub fn from_json_str(json: &str) -> Result<Self, BackendError> {
        let entries = serde_json::from_str(json).map_err(|e| BackendError::Config(format!("bad script: {e}")))?;
        Self::new(entries)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, BackendError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::Config(format!("cannot read script {}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn entries(&self) -> &[ScriptEntry] {
        &self.entries
    }
}

impl CompletionBackend for ScriptedBackend {
    fn complete(&self, _system_prompt: &str, user_prompt: &str) -> Result<String, BackendError> {
        let digest = prompt_digest(user_prompt);
        let entry = self
            .entries
            .iter()
            .find(|e| e.applies(user_prompt, &digest))
            .ok_or(BackendError::NoScriptMatch)?;
        match (&entry.error, &entry.response) {
            (Some(e), _) if e == "timeout" => Err(BackendError::Timeout),
            (Some(e), _) => Err(BackendError::Scripted(e.clone())),
            (None, Some(r)) => Ok(r.clone()),
            (None, None) => Err(BackendError::NoScriptMatch),
        }
    }
}
