mod common;

use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use serde_json::{json, Value};
use spelunker::config::RerankConfig;
use spelunker::server::{router, AppState};
use spelunker_core::index::{index_to_bytes, IndexMetadata};
use spelunker_llm::{ScriptEntry, ScriptedBackend};
use tower::ServiceExt;

fn state() -> Arc<AppState> {
    Arc::new(AppState {
        engine: common::engine(),
        backend: common::mock(),
        rerank: RerankConfig::default(),
    })
}

async fn call(state: &Arc<AppState>, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .header("origin", "http://localhost:5173")
        .body(body.map_or(Body::empty(), |b| Body::from(b.to_string())))
        .unwrap();
    let resp = router(state.clone(), &["http://localhost:5173".into()]).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

fn ids(v: &Value) -> Vec<u64> {
    v["hits"].as_array().unwrap().iter().map(|h| h["id"].as_u64().unwrap()).collect()
}

#[tokio::test]
async fn health_and_schema() {
    let s = state();
    assert_eq!(call(&s, "GET", "/api/health", None).await, (StatusCode::OK, json!({"status": "ok"})));
    let (status, schema) = call(&s, "GET", "/api/schema", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(schema["fields"].as_array().unwrap().len(), 12);
}

#[tokio::test]
async fn natural_language_query() {
    let s = state();
    let (status, v) = call(&s, "POST", "/api/query", Some(json!({"text": "french pinot around 30 dollars", "k": 3}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["hits"].as_array().unwrap().len(), 3);
    assert_eq!(v["hits"][0]["fields"]["country"], "France");
    assert_eq!(v["rerank"], json!({"used": false, "fallback": false}));
    assert!(v["timings"]["structure_ms"].as_f64().unwrap() >= 0.0);

    let mut body = v.clone();
    body.as_object_mut().unwrap().remove("timings");
    let golden: Value = serde_json::from_str(&common::read_fixture("golden/ask_french_pinot_k3.json")).unwrap();
    assert_eq!(body, golden);
}

#[tokio::test]
async fn request_validation() {
    let s = state();
    assert_eq!(call(&s, "POST", "/api/query", Some(json!({"text": "", "k": 3}))).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(call(&s, "POST", "/api/query", Some(json!({"text": "x", "k": 0}))).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(call(&s, "POST", "/api/query", Some(json!({"text": "x", "k": 101}))).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(call(&s, "POST", "/api/query", Some(json!({"k": 3}))).await.0, StatusCode::BAD_REQUEST);
    let (status, v) = call(&s, "POST", "/api/search", Some(json!({"structured_query": {"grape": "x"}, "k": 3}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(v["error"].as_str().unwrap().contains("grape"));
    let (status, _) = call(&s, "POST", "/api/search", Some(json!({"structured_query": {"price": "cheap"}, "k": 3}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn gateway_failures_are_502() {
    let s = state();
    let (status, v) = call(&s, "POST", "/api/query", Some(json!({"text": "gibberish request", "k": 3}))).await;
    assert_eq!(status, StatusCode::BAD_GATEWAY);
    assert_eq!(v["gateway"]["kind"], "unparseable_response");
    assert_eq!(v["gateway"]["response"], "not json at all");
    let (status, v) = call(&s, "POST", "/api/query", Some(json!({"text": "unscripted", "k": 3}))).await;
    assert_eq!(status, StatusCode::BAD_GATEWAY);
    assert_eq!(v["gateway"]["kind"], "backend_failure");
    let (status, _) = call(&s, "POST", "/api/query", Some(json!({"text": "grape request", "k": 3}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn rerank_timeout_falls_back_to_knn_order() {
    let s = state();
    let (status, plain) = call(&s, "POST", "/api/query", Some(json!({"text": "slow pinot", "k": 3}))).await;
    assert_eq!(status, StatusCode::OK);
    let (status, v) = call(&s, "POST", "/api/query", Some(json!({"text": "slow pinot", "k": 3, "rerank": true}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["rerank"], json!({"used": true, "fallback": true}));
    assert_eq!(ids(&v), ids(&plain));
}

#[tokio::test]
async fn rerank_reorders_within_the_pool() {
    let s = state();
    let (_, v) = call(&s, "POST", "/api/query", Some(json!({"text": "french pinot around 30 dollars", "k": 3, "rerank": true}))).await;
    assert_eq!(v["rerank"], json!({"used": true, "fallback": false}));
    assert_eq!(ids(&v), [10, 9, 13]);
}

#[tokio::test]
async fn structured_search() {
    let s = state();
    let (status, v) = call(&s, "POST", "/api/search", Some(json!({"structured_query": {"country": "Italy"}, "k": 3}))).await;
    assert_eq!(status, StatusCode::OK);
    let mut got = ids(&v);
    got.sort();
    assert_eq!(got, [0, 6, 14]);
    assert_eq!(v["timings"]["structure_ms"], 0.0);
    for h in v["hits"].as_array().unwrap() {
        assert_eq!(h["explanation"].as_str().unwrap().split("; ").count(), 1);
        assert!(h["explanation"].as_str().unwrap().starts_with("country = Italy (distance 0.0000, weight 1)"));
    }

    let q = |w: f64| json!({"structured_query": {"price": 30, "variety": "Pinot Noir"}, "k": 5, "weights": {"price": w}});
    let (_, heavy) = call(&s, "POST", "/api/search", Some(q(4.0))).await;
    let (_, light) = call(&s, "POST", "/api/search", Some(q(1.0))).await;
    assert_eq!(heavy["weights"], json!({"price": 4.0, "variety": 1.0}));
    assert_eq!(light["weights"], json!({"price": 1.0, "variety": 1.0}));
}

#[tokio::test]
async fn hit_distances_recompute_from_breakdown() {
    let s = state();
    let (_, v) = call(
        &s,
        "POST",
        "/api/search",
        Some(json!({"structured_query": {"price": 40, "points": 90, "country": "France", "variety": "Shiraz"}, "k": 20, "weights": {"points": 0.25}})),
    )
    .await;
    let hits = v["hits"].as_array().unwrap();
    assert_eq!(hits.len(), 20);
    for h in hits {
        let parts = h["breakdown"].as_array().unwrap();
        assert_eq!(parts.len(), 4);
        let sum: f64 = parts
            .iter()
            .map(|p| p["weight"].as_f64().unwrap() * p["distance"].as_f64().unwrap().powi(2))
            .sum();
        assert!((sum.sqrt() - h["distance"].as_f64().unwrap()).abs() < 1e-9);
    }
}

#[tokio::test]
async fn search_is_bit_deterministic_and_index_is_untouched() {
    let s = state();
    let before = index_to_bytes(s.engine.tree(), &IndexMetadata::new()).unwrap();
    let body = json!({"structured_query": {"country": "France", "price": 30}, "k": 5});
    let strip = |mut v: Value| {
        v.as_object_mut().unwrap().remove("timings");
        serde_json::to_string(&v).unwrap()
    };
    let first = strip(call(&s, "POST", "/api/search", Some(body.clone())).await.1);
    let mut handles = Vec::new();
    for i in 0..16 {
        let s = s.clone();
        let body = body.clone();
        handles.push(tokio::spawn(async move {
            let _ = call(&s, "POST", "/api/query", Some(json!({"text": "french pinot around 30 dollars", "k": 3, "rerank": i % 2 == 0}))).await;
            call(&s, "POST", "/api/search", Some(body)).await.1
        }));
    }
    for h in handles {
        assert_eq!(strip(h.await.unwrap()), first);
    }
    assert_eq!(index_to_bytes(s.engine.tree(), &IndexMetadata::new()).unwrap(), before);
}

#[tokio::test]
async fn cors_allows_configured_origin() {
    let s = state();
    let req = Request::builder()
        .method("GET")
        .uri("/api/health")
        .header("origin", "http://localhost:5173")
        .body(Body::empty())
        .unwrap();
    let resp = router(s.clone(), &["http://localhost:5173".into()]).oneshot(req).await.unwrap();
    assert_eq!(resp.headers()["access-control-allow-origin"], "http://localhost:5173");
    let req = Request::builder()
        .method("GET")
        .uri("/api/health")
        .header("origin", "http://evil.example")
        .body(Body::empty())
        .unwrap();
    let resp = router(s, &["http://localhost:5173".into()]).oneshot(req).await.unwrap();
    assert!(resp.headers().get("access-control-allow-origin").is_none());
}

#[tokio::test]
async fn default_rerank_flag_comes_from_config() {
    let backend = Arc::new(ScriptedBackend::new(vec![
        ScriptEntry::matching("Request:", "[6]"),
        ScriptEntry::matching("italy", r#"{"country":"Italy"}"#),
    ]).unwrap());
    let s = Arc::new(AppState {
        engine: common::engine(),
        backend,
        rerank: RerankConfig { enabled: true, ..Default::default() },
    });
    let (_, v) = call(&s, "POST", "/api/query", Some(json!({"text": "italy", "k": 1}))).await;
    assert_eq!(v["rerank"]["used"], true);
    assert_eq!(ids(&v), [6]);
    let (_, v) = call(&s, "POST", "/api/query", Some(json!({"text": "italy", "k": 1, "rerank": false}))).await;
    assert_eq!(v["rerank"]["used"], false);
}
