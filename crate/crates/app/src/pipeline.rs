//! The search flow shared by the CLI, the HTTP service and evaluation runs:
//! structure (optional) → k-NN over a pool → re-rank (optional) →
//! truncate → explain.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use indexmap::IndexMap;
use serde::Serialize;
use serde_json::{Map, Value};
use spelunker_core::index::{load_index, IndexMetadata, PersistError};
use spelunker_core::query::{resolve_field, QueryValue, Validated};
use spelunker_core::{BallTree, EmbeddingProvider, QueryError, SearchHit, StructuredQuery};
use spelunker_llm::{rerank, structure_query, CompletionBackend, GatewayError, RerankCandidate};
use thiserror::Error;

use crate::config::{ConfigError, EmbedderConfig, RerankConfig};

pub const MAX_K: usize = 100;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("{0}")]
    BadRequest(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("embedding backend failure: {0}")]
    Embedding(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl ServiceError {
    /// True for failures of an external backend rather than of the input.
    pub fn is_backend(&self) -> bool {
        match self {
            ServiceError::Gateway(GatewayError::EmptyText | GatewayError::EmptyExtraction { .. }) => false,
            ServiceError::Gateway(_) | ServiceError::Embedding(_) => true,
            _ => false,
        }
    }
}

impl From<QueryError> for ServiceError {
    fn from(e: QueryError) -> Self {
        match e {
            QueryError::Embedding(e) => ServiceError::Embedding(e.to_string()),
            other => ServiceError::BadRequest(other.to_string()),
        }
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("cannot load index: {0}")]
    Persist(#[from] PersistError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("embedder dimension {embedder} does not match index dimension {index}")]
    Dimension { embedder: usize, index: usize },
}

/// A loaded index plus the embedder its categorical fields were built with.
/// Immutable after construction.
pub struct Engine {
    tree: BallTree<f64>,
    embedder: Arc<dyn EmbeddingProvider>,
    metadata: IndexMetadata,
}

impl Engine {
    pub fn new(tree: BallTree<f64>, embedder: Arc<dyn EmbeddingProvider>, metadata: IndexMetadata) -> Result<Self, EngineError> {
        let index = tree.dataset().embed_dim();
        if embedder.dimension() != index {
            return Err(EngineError::Dimension {
                embedder: embedder.dimension(),
                index,
            });
        }
        Ok(Engine {
            tree,
            embedder,
            metadata,
        })
    }

    /// Loads an index file; the embedder comes from `embedder` or, if
    /// absent, from the record in the index metadata.
    pub fn open(path: impl AsRef<Path>, embedder: Option<&EmbedderConfig>) -> Result<Self, EngineError> {
        let (tree, metadata) = load_index::<f64>(path)?;
        let config = match embedder {
            Some(c) => c.clone(),
            None => EmbedderConfig::from_metadata(&metadata)?,
        };
        let provider = config.build()?;
        Engine::new(tree, provider, metadata)
    }

    pub fn tree(&self) -> &BallTree<f64> {
        &self.tree
    }

    pub fn schema(&self) -> &spelunker_core::DatasetSchema {
        self.tree.dataset().schema()
    }

    pub fn metadata(&self) -> &IndexMetadata {
        &self.metadata
    }

    pub fn len(&self) -> usize {
        self.tree.dataset().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldBreakdown {
    pub field: String,
    pub distance: f64,
    pub weight: f64,
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HitView {
    pub id: u64,
    pub distance: f64,
    /// Original values of every schema field; `null` when missing.
    pub fields: IndexMap<String, Option<String>>,
    pub breakdown: Vec<FieldBreakdown>,
    pub explanation: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct RerankInfo {
    pub used: bool,
    pub fallback: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Timings {
    pub structure_ms: f64,
    pub search_ms: f64,
    pub rerank_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryResponse {
    pub structured_query: IndexMap<String, QueryValue>,
    /// Weight actually applied to each queried field.
    pub weights: IndexMap<String, f64>,
    pub warnings: Vec<String>,
    pub hits: Vec<HitView>,
    pub rerank: RerankInfo,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings: Option<Timings>,
}

/// Re-ranking request for one search: the backend, the free text shown to
/// it and the pool/prompt settings.
pub struct RerankStage<'a> {
    pub backend: &'a dyn CompletionBackend,
    pub text: &'a str,
    pub config: &'a RerankConfig,
}

fn elapsed_ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

pub fn check_k(k: usize) -> Result<(), ServiceError> {
    if (1..=MAX_K).contains(&k) {
        Ok(())
    } else {
        Err(ServiceError::BadRequest(format!("k must be between 1 and {MAX_K}, got {k}")))
    }
}

fn format_weight(w: f64) -> String {
    format!("{w}")
}

impl Engine {
    fn original_fields(&self, id: u64) -> IndexMap<String, Option<String>> {
        let original = self.tree.dataset().original(id);
        self.schema()
            .fields
            .iter()
            .map(|f| {
                let v = original
                    .and_then(|r| r.get(&f.name))
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty());
                (f.name.clone(), v)
            })
            .collect()
    }

    fn view(&self, hit: &SearchHit<f64>) -> HitView {
        let fields = self.original_fields(hit.id);
        let breakdown: Vec<FieldBreakdown> = hit
            .breakdown
            .per_field
            .iter()
            .map(|c| FieldBreakdown {
                field: c.field.clone(),
                distance: c.distance,
                weight: c.weight,
                contribution: c.contribution,
            })
            .collect();
        let explanation = breakdown
            .iter()
            .map(|b| {
                let value = fields.get(&b.field).cloned().flatten().unwrap_or_else(|| "missing".into());
                format!(
                    "{} = {} (distance {:.4}, weight {})",
                    b.field,
                    value,
                    b.distance,
                    format_weight(b.weight)
                )
            })
            .collect::<Vec<_>>()
            .join("; ");
        HitView {
            id: hit.id,
            distance: hit.distance,
            fields,
            breakdown,
            explanation,
        }
    }

    fn candidates(&self, hits: &[SearchHit<f64>]) -> Vec<RerankCandidate> {
        hits.iter()
            .map(|h| RerankCandidate {
                id: h.id,
                fields: self
                    .original_fields(h.id)
                    .into_iter()
                    .filter_map(|(k, v)| v.map(|v| (k, v)))
                    .collect(),
            })
            .collect()
    }

    /// Runs a validated structured query. With a re-rank stage the k-NN
    /// search fetches a larger pool, the backend reorders it and the result
    /// is cut back to `k`.
    pub fn run(
        &self,
        validated: Validated,
        k: usize,
        rerank_stage: Option<RerankStage<'_>>,
        structure_ms: f64,
    ) -> Result<QueryResponse, ServiceError> {
        check_k(k)?;
        let start = Instant::now();
        let Validated { query, warnings } = validated;
        let weights = query.effective_weights(self.schema());
        let point = query.to_query_point(self.tree.dataset(), self.embedder.as_ref())?;
        let n = self.len();
        let pool = match &rerank_stage {
            Some(stage) => stage.config.pool.pool_size(k, n),
            None => k.min(n),
        };
        let mut hits = self
            .tree
            .knn_search(&point, pool)
            .map_err(|e| ServiceError::Internal(e.to_string()))?;
        let search_ms = elapsed_ms(start);

        let mut info = RerankInfo::default();
        let mut rerank_ms = 0.0;
        if let Some(stage) = rerank_stage {
            let t = Instant::now();
            let outcome = rerank(stage.text, &self.candidates(&hits), stage.backend, &stage.config.options);
            let mut by_id: IndexMap<u64, SearchHit<f64>> = hits.into_iter().map(|h| (h.id, h)).collect();
            hits = outcome
                .ordered_ids
                .iter()
                .filter_map(|id| by_id.swap_remove(id))
                .collect();
            info = RerankInfo {
                used: true,
                fallback: outcome.used_fallback,
            };
            rerank_ms = elapsed_ms(t);
        }
        hits.truncate(k);

        Ok(QueryResponse {
            structured_query: query.values,
            weights,
            warnings,
            hits: hits.iter().map(|h| self.view(h)).collect(),
            rerank: info,
            timings: Some(Timings {
                structure_ms,
                search_ms,
                rerank_ms,
                total_ms: structure_ms + elapsed_ms(start),
            }),
        })
    }

    /// Natural-language request: structure with the backend, then search.
    pub fn ask(
        &self,
        text: &str,
        k: usize,
        backend: &dyn CompletionBackend,
        rerank_config: Option<&RerankConfig>,
    ) -> Result<QueryResponse, ServiceError> {
        check_k(k)?;
        if text.trim().is_empty() {
            return Err(ServiceError::BadRequest("text must not be empty".into()));
        }
        let t = Instant::now();
        let extraction = structure_query(text, self.schema(), backend)?;
        let structure_ms = elapsed_ms(t);
        let validated = Validated {
            query: extraction.query,
            warnings: extraction.warnings,
        };
        let stage = rerank_config.map(|config| RerankStage { backend, text, config });
        self.run(validated, k, stage, structure_ms)
    }

    /// Direct structured search; no LLM involved. Unknown fields are
    /// rejected rather than dropped.
    pub fn search(
        &self,
        structured: &Value,
        weights: Option<&Value>,
        k: usize,
    ) -> Result<QueryResponse, ServiceError> {
        let validated = parse_structured(self.schema(), structured, weights)?;
        self.run(validated, k, None, 0.0)
    }
}

/// Strict parse of a structured query object plus optional weight object.
pub fn parse_structured(
    schema: &spelunker_core::DatasetSchema,
    structured: &Value,
    weights: Option<&Value>,
) -> Result<Validated, ServiceError> {
    let map = structured
        .as_object()
        .ok_or_else(|| ServiceError::BadRequest("structured_query must be a JSON object".into()))?;
    if let Some(unknown) = map.keys().find(|k| resolve_field(schema, k).is_none()) {
        return Err(ServiceError::BadRequest(format!("unknown field `{unknown}`")));
    }
    let mut validated = StructuredQuery::from_json_object(map, schema)?;
    if let Some(w) = weights.filter(|w| !w.is_null()) {
        let parsed = parse_weights(w)?;
        let mut query = validated.query.clone();
        query.weights = parsed;
        let mut revalidated = query.validate(schema)?;
        validated.warnings.append(&mut revalidated.warnings);
        validated.query = revalidated.query;
    }
    Ok(validated)
}

fn parse_weights(w: &Value) -> Result<IndexMap<String, f64>, ServiceError> {
    let map: &Map<String, Value> = w
        .as_object()
        .ok_or_else(|| ServiceError::BadRequest("weights must be a JSON object".into()))?;
    map.iter()
        .map(|(k, v)| {
            v.as_f64()
                .map(|f| (k.clone(), f))
                .ok_or_else(|| ServiceError::BadRequest(format!("weight for `{k}` must be a number")))
        })
        .collect()
}
