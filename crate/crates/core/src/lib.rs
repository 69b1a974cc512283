//! Exact similarity search over records that mix numeric, boolean and
//! categorical text fields.
//!
//! Records are loaded against a [`DatasetSchema`], preprocessed into a
//! [`ProcessedDataset`] (scaled numbers, 0/1 flags, unit-norm text
//! embeddings) and indexed by a pivot-based [`BallTree`]. Queries are
//! partial: a [`StructuredQuery`] names only the fields it cares about,
//! optionally with per-field weights, and every hit carries a per-field
//! [`DistanceBreakdown`] explaining its distance.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root pick `f64`.

pub mod dataset;
pub mod eval;
pub mod index;
pub mod metric;
pub mod preprocess;
pub mod query;
pub mod scalar;
pub mod schema;
pub mod synth;

pub use dataset::{FieldValue, ProcessedDataset, ProcessedRecord, TextValue};
pub use index::{brute_force_knn, BallNode, BallTree, IndexError, SearchHit, SearchStats};
pub use metric::{combined_distance, field_distance, DistanceBreakdown, FieldContribution, QueryPoint};
pub use preprocess::{
    build_processed_dataset, local_embed, BuildOptions, EmbedError, EmbeddingProvider, LocalEmbedder,
    PreprocessError, ScalerStats,
};
pub use query::{QueryError, QueryValue, StructuredQuery};
pub use scalar::Scalar;
pub use schema::{load_csv, validate_schema, DatasetSchema, FieldKind, FieldSpec, RawRecord, SchemaError};

pub type Dataset = ProcessedDataset<f64>;
pub type Record = ProcessedRecord<f64>;
pub type Value = FieldValue<f64>;
pub type Tree = BallTree<f64>;
pub type Hit = SearchHit<f64>;
pub type Query = QueryPoint<f64>;
pub type Breakdown = DistanceBreakdown<f64>;

pub type Dataset32 = ProcessedDataset<f32>;
pub type Tree32 = BallTree<f32>;
pub type Hit32 = SearchHit<f32>;
