#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use spelunker::config::EmbedderConfig;
use spelunker::Engine;
use spelunker_core::preprocess::build_processed_dataset;
use spelunker_core::{load_csv, BallTree, DatasetSchema};
use spelunker_llm::ScriptedBackend;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn read_fixture(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).unwrap()
}

pub fn engine() -> Engine {
    let schema = DatasetSchema::from_json_file(fixture("wine_schema.json")).unwrap();
    let raw = load_csv(fixture("wine_fixture.csv"), &schema).unwrap();
    let embedder = EmbedderConfig::Local { dim: 64 };
    let provider = embedder.build().unwrap();
    let ds = build_processed_dataset(raw, &schema, provider.as_ref()).unwrap();
    let tree = BallTree::build(ds, spelunker_core::index::DEFAULT_LEAF_SIZE).unwrap();
    Engine::new(tree, provider, embedder.to_metadata()).unwrap()
}

pub fn mock() -> Arc<ScriptedBackend> {
    Arc::new(ScriptedBackend::from_file(fixture("mock_llm.json")).unwrap())
}

pub fn pretty<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).unwrap() + "\n"
}
