//! Remote embedding provider: POST `{base}/embed` with `{"texts": [...]}`,
//! expecting `{"vectors": [[...], ...]}`.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use spelunker_core::{EmbedError, EmbeddingProvider};

use crate::EMBED_API_KEY_ENV;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpEmbedderConfig {
    pub base_url: String,
    pub dimension: usize,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
}

fn default_timeout() -> f64 {
    30.0
}

#[derive(Debug)]
pub struct HttpEmbedder {
    config: HttpEmbedderConfig,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f32>>,
}

impl HttpEmbedder {
    /// Uses `SPELUNKER_EMBED_API_KEY` as a bearer token when it is set.
    pub fn new(config: HttpEmbedderConfig) -> Result<Self, EmbedError> {
        if config.dimension == 0 {
            return Err(EmbedError::Provider("embedding dimension must be positive".into()));
        }
        if !(config.timeout_secs.is_finite() && config.timeout_secs > 0.0) {
            return Err(EmbedError::Provider("timeout must be positive".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_secs))
            .build()
            .map_err(|e| EmbedError::Provider(e.to_string()))?;
        let api_key = std::env::var(EMBED_API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Ok(HttpEmbedder { config, api_key, client })
    }

    fn url(&self) -> String {
        format!("{}/embed", self.config.base_url.trim_end_matches('/'))
    }
}

impl EmbeddingProvider for HttpEmbedder {
    fn dimension(&self) -> usize {
        self.config.dimension
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let mut req = self.client.post(self.url()).json(&json!({ "texts": texts }));
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| EmbedError::Provider(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(EmbedError::Provider(format!("embedding endpoint returned HTTP {status}")));
        }
        let body: EmbedResponse = resp.json().map_err(|e| EmbedError::Provider(e.to_string()))?;
        if body.vectors.len() != texts.len() {
            return Err(EmbedError::Count {
                expected: texts.len(),
                got: body.vectors.len(),
            });
        }
        Ok(body.vectors)
    }
}
