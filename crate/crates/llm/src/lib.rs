//! LLM plumbing: a pluggable completion backend (HTTP or scripted),
//! natural-language query structuring and candidate re-ranking, plus an
//! HTTP embedding provider.

pub mod backend;
pub mod embed;
pub mod rerank;
pub mod structure;

mod json;

pub use backend::{BackendError, CompletionBackend, HttpBackend, HttpBackendConfig, ScriptEntry, ScriptedBackend};
pub use embed::{HttpEmbedder, HttpEmbedderConfig};
pub use rerank::{rerank, RerankCandidate, RerankOptions, RerankOutcome, RERANK_SYSTEM_PROMPT};
pub use structure::{structure_query, structuring_system_prompt, Extraction, GatewayError};

/// Environment variable holding the completion API key.
pub const LLM_API_KEY_ENV: &str = "SPELUNKER_LLM_API_KEY";
/// Environment variable holding the embedding API key.
pub const EMBED_API_KEY_ENV: &str = "SPELUNKER_EMBED_API_KEY";
