//! Exact k-nearest-neighbour search over a [`ProcessedDataset`].

mod persist;
mod tree;

use std::cmp::Ordering;

use thiserror::Error;

use crate::dataset::ProcessedDataset;
use crate::metric::{combined_distance, weighted_distance, DistanceBreakdown, MetricError, QueryPoint};
use crate::scalar::Scalar;

pub use persist::{
    index_from_bytes, index_to_bytes, load_index, save_index, IndexMetadata, PersistError, FORMAT_VERSION, MAGIC,
};
pub use tree::{BallNode, BallTree, SearchStats, DEFAULT_LEAF_SIZE};

#[derive(Debug, Error, PartialEq)]
pub enum IndexError {
    #[error("cannot index an empty dataset")]
    EmptyDataset,
    #[error("leaf size must be at least 1")]
    InvalidLeafSize,
    #[error("k must be at least 1")]
    InvalidK,
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchHit<T> {
    pub id: u64,
    pub distance: T,
    pub breakdown: DistanceBreakdown<T>,
}

/// Total order on `(distance, id)`; distances are never NaN.
pub(crate) fn cmp_hit<T: Scalar>(a: (T, u64), b: (T, u64)) -> Ordering {
    a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1))
}

pub(crate) fn check_query<T: Scalar>(
    dataset: &ProcessedDataset<T>,
    query: &QueryPoint<T>,
    k: usize,
) -> Result<(), IndexError> {
    if k == 0 {
        return Err(IndexError::InvalidK);
    }
    for term in query.terms() {
        if dataset.schema().field_index(&term.name) != Some(term.field) {
            return Err(MetricError::UnknownField(term.name.clone()).into());
        }
    }
    query.check_dimension(dataset.embed_dim())?;
    Ok(())
}

/// Full scan, sorted by `(distance, id)`, truncated to `k`.
pub fn brute_force_knn<T: Scalar>(
    dataset: &ProcessedDataset<T>,
    query: &QueryPoint<T>,
    k: usize,
) -> Result<Vec<SearchHit<T>>, IndexError> {
    check_query(dataset, query, k)?;
    let mut scored: Vec<(T, u64, usize)> = dataset
        .records()
        .iter()
        .enumerate()
        .map(|(pos, r)| (weighted_distance(query, r), r.id, pos))
        .collect();
    scored.sort_by(|a, b| cmp_hit((a.0, a.1), (b.0, b.1)));
    scored.truncate(k);
    Ok(scored
        .into_iter()
        .map(|(distance, id, pos)| SearchHit {
            id,
            distance,
            breakdown: combined_distance(query, dataset.record(pos)),
        })
        .collect())
}
