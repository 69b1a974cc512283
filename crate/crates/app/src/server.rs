//! JSON-over-HTTP API: health, schema, natural-language query and
//! structured search.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::{HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use spelunker_llm::{CompletionBackend, GatewayError};
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

use crate::config::RerankConfig;
use crate::pipeline::{Engine, QueryResponse, ServiceError};

pub struct AppState {
    pub engine: Engine,
    pub backend: Arc<dyn CompletionBackend>,
    pub rerank: RerankConfig,
}

#[derive(Debug, Deserialize)]
pub struct QueryRequest {
    pub text: String,
    pub k: usize,
    #[serde(default)]
    pub rerank: Option<bool>,
}

#[derive(Debug, Deserialize)]
pub struct SearchRequest {
    pub structured_query: Value,
    pub k: usize,
    #[serde(default)]
    pub weights: Option<Value>,
}

pub struct ApiError(StatusCode, Value);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

fn gateway_detail(e: &GatewayError) -> Value {
    match e {
        GatewayError::EmptyText => json!({"kind": "empty_text"}),
        GatewayError::BackendFailure(b) => json!({"kind": "backend_failure", "message": b.to_string()}),
        GatewayError::UnparseableResponse { reason, response } => {
            json!({"kind": "unparseable_response", "message": reason, "response": response})
        }
        GatewayError::EmptyExtraction { response, warnings } => {
            json!({"kind": "empty_extraction", "response": response, "warnings": warnings})
        }
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        let message = e.to_string();
        match &e {
            ServiceError::BadRequest(_) | ServiceError::Gateway(GatewayError::EmptyText) => {
                ApiError(StatusCode::BAD_REQUEST, json!({"error": message}))
            }
            ServiceError::Gateway(g @ GatewayError::EmptyExtraction { .. }) => ApiError(
                StatusCode::UNPROCESSABLE_ENTITY,
                json!({"error": message, "gateway": gateway_detail(g)}),
            ),
            ServiceError::Gateway(g) => {
                ApiError(StatusCode::BAD_GATEWAY, json!({"error": message, "gateway": gateway_detail(g)}))
            }
            ServiceError::Embedding(_) => ApiError(StatusCode::BAD_GATEWAY, json!({"error": message})),
            ServiceError::Internal(_) => ApiError(StatusCode::INTERNAL_SERVER_ERROR, json!({"error": message})),
        }
    }
}

fn rejection(r: JsonRejection) -> ApiError {
    ApiError(StatusCode::BAD_REQUEST, json!({"error": r.body_text()}))
}

async fn blocking<F>(f: F) -> Result<Json<QueryResponse>, ApiError>
where
    F: FnOnce() -> Result<QueryResponse, ServiceError> + Send + 'static,
{
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map(Json).map_err(ApiError::from),
        Err(e) => Err(ServiceError::Internal(e.to_string()).into()),
    }
}

async fn health() -> Json<Value> {
    Json(json!({"status": "ok"}))
}

async fn schema(State(state): State<Arc<AppState>>) -> Json<Value> {
    Json(serde_json::to_value(state.engine.schema()).unwrap_or(Value::Null))
}

async fn query(
    State(state): State<Arc<AppState>>,
    body: Result<Json<QueryRequest>, JsonRejection>,
) -> Result<Json<QueryResponse>, ApiError> {
    let Json(req) = body.map_err(rejection)?;
    blocking(move || {
        let use_rerank = req.rerank.unwrap_or(state.rerank.enabled);
        let rerank = use_rerank.then_some(&state.rerank);
        state.engine.ask(&req.text, req.k, state.backend.as_ref(), rerank)
    })
    .await
}

async fn search(
    State(state): State<Arc<AppState>>,
    body: Result<Json<SearchRequest>, JsonRejection>,
) -> Result<Json<QueryResponse>, ApiError> {
    let Json(req) = body.map_err(rejection)?;
    blocking(move || state.engine.search(&req.structured_query, req.weights.as_ref(), req.k)).await
}

fn cors(origins: &[String]) -> CorsLayer {
    let layer = CorsLayer::new()
        .allow_methods([Method::GET, Method::POST])
        .allow_headers(Any);
    if origins.iter().any(|o| o == "*") {
        return layer.allow_origin(Any);
    }
    let list: Vec<HeaderValue> = origins.iter().filter_map(|o| HeaderValue::from_str(o).ok()).collect();
    layer.allow_origin(AllowOrigin::list(list))
}

pub fn router(state: Arc<AppState>, cors_origins: &[String]) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/schema", get(schema))
        .route("/api/query", post(query))
        .route("/api/search", post(search))
        .layer(cors(cors_origins))
        .with_state(state)
}

/// Serves until Ctrl-C; in-flight requests are allowed to finish.
pub async fn serve(state: Arc<AppState>, addr: SocketAddr, cors_origins: &[String]) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state, cors_origins))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
            log::info!("shutting down");
        })
        .await
}
