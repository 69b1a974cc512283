//! Service and backend configuration, loaded from JSON files.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use spelunker_core::index::IndexMetadata;
use spelunker_core::{EmbeddingProvider, LocalEmbedder};
use spelunker_llm::{
    BackendError, CompletionBackend, HttpBackend, HttpBackendConfig, HttpEmbedder, HttpEmbedderConfig, RerankOptions,
    ScriptedBackend,
};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {reason}")]
    Read { path: PathBuf, reason: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Which completion backend to use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LlmConfig {
    Http(HttpBackendConfig),
    /// Scripted offline backend; relative paths resolve against the
    /// directory of the config file they came from.
    Mock { script: PathBuf },
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig::Http(HttpBackendConfig::new("http://127.0.0.1:8080/v1/chat/completions", "default"))
    }
}

impl LlmConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let mut cfg: LlmConfig = read_json(path)?;
        cfg.rebase(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    fn rebase(&mut self, dir: &Path) {
        if let LlmConfig::Mock { script } = self {
            if script.is_relative() {
                *script = dir.join(&*script);
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match self {
            LlmConfig::Http(c) => Ok(c.validate()?),
            LlmConfig::Mock { .. } => Ok(()),
        }
    }

    /// Builds the backend. The HTTP backend needs its API key in the
    /// environment.
    pub fn build(&self) -> Result<Arc<dyn CompletionBackend>, ConfigError> {
        Ok(match self {
            LlmConfig::Http(c) => Arc::new(HttpBackend::from_env(c.clone())?),
            LlmConfig::Mock { script } => Arc::new(ScriptedBackend::from_file(script)?),
        })
    }
}

/// Embedding provider, recorded in the index metadata at build time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EmbedderConfig {
    Local { dim: usize },
    Http(HttpEmbedderConfig),
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig::Local {
            dim: LocalEmbedder::DEFAULT_DIM,
        }
    }
}

pub const EMBEDDER_METADATA_KEY: &str = "embedder";

impl EmbedderConfig {
    pub fn build(&self) -> Result<Arc<dyn EmbeddingProvider>, ConfigError> {
        match self {
            EmbedderConfig::Local { dim } => Ok(Arc::new(
                LocalEmbedder::new(*dim).map_err(|e| ConfigError::Invalid(e.to_string()))?,
            )),
            EmbedderConfig::Http(c) => Ok(Arc::new(
                HttpEmbedder::new(c.clone()).map_err(|e| ConfigError::Invalid(e.to_string()))?,
            )),
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            EmbedderConfig::Local { dim } => *dim,
            EmbedderConfig::Http(c) => c.dimension,
        }
    }

    pub fn to_metadata(&self) -> IndexMetadata {
        let mut m = IndexMetadata::new();
        m.insert(
            EMBEDDER_METADATA_KEY.into(),
            serde_json::to_value(self).expect("embedder config serializes"),
        );
        m
    }

    pub fn from_metadata(m: &IndexMetadata) -> Result<Self, ConfigError> {
        let v = m
            .get(EMBEDDER_METADATA_KEY)
            .ok_or_else(|| ConfigError::Invalid("index does not record its embedder".into()))?;
        serde_json::from_value(v.clone()).map_err(|e| ConfigError::Invalid(format!("index embedder record: {e}")))
    }
}

/// Pool size for re-ranking: `min(max(factor * k, k + extra), n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolRule {
    pub factor: usize,
    pub extra: usize,
}

impl Default for PoolRule {
    fn default() -> Self {
        PoolRule { factor: 2, extra: 10 }
    }
}

impl PoolRule {
    pub fn pool_size(&self, k: usize, n: usize) -> usize {
        (self.factor * k).max(k + self.extra).min(n)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RerankConfig {
    /// Re-rank when a request does not say.
    pub enabled: bool,
    pub pool: PoolRule,
    pub options: RerankOptions,
}

fn default_port() -> u16 {
    8000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    #[serde(default)]
    pub index: Option<PathBuf>,
    #[serde(default)]
    pub llm: LlmConfig,
    /// Overrides the embedder recorded in the index.
    #[serde(default)]
    pub embedder: Option<EmbedderConfig>,
    #[serde(default)]
    pub rerank: RerankConfig,
    #[serde(default = "default_port")]
    pub port: u16,
    /// Allowed CORS origins; `"*"` allows any.
    #[serde(default)]
    pub cors_origins: Vec<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            index: None,
            llm: LlmConfig::default(),
            embedder: None,
            rerank: RerankConfig::default(),
            port: default_port(),
            cors_origins: Vec::new(),
        }
    }
}

impl ServiceConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let mut cfg: ServiceConfig = read_json(path)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        cfg.llm.rebase(dir);
        if let Some(index) = &cfg.index {
            if index.is_relative() {
                cfg.index = Some(dir.join(index));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.port == 0 {
            return Err(ConfigError::Invalid("port must be in 1..=65535".into()));
        }
        if self.rerank.pool.factor == 0 {
            return Err(ConfigError::Invalid("rerank pool factor must be at least 1".into()));
        }
        self.llm.validate()
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ConfigError> {
    let err = |reason: String| ConfigError::Read {
        path: path.to_path_buf(),
        reason,
    };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| err(e.to_string()))
}
