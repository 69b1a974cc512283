//! Wine search service: CLI, HTTP API and evaluation runs on top of the
//! exact mixed-type k-NN index and the LLM gateway.

pub mod cli;
pub mod config;
pub mod evaluation;
pub mod pipeline;
pub mod server;

pub use config::{EmbedderConfig, LlmConfig, PoolRule, RerankConfig, ServiceConfig};
pub use evaluation::{evaluate_extraction, evaluate_retrieval, load_truth, TruthCase};
pub use pipeline::{Engine, HitView, QueryResponse, ServiceError};
