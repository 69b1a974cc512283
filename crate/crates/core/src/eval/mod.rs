//! Evaluation metrics: retrieval quality at K, attribute-extraction scoring,
//! string fidelity, paired significance testing and latency summaries.

mod extraction;
mod jaro;
mod latency;
mod report;
mod retrieval;
mod wilcoxon;

use thiserror::Error;

pub use extraction::{extraction_confusion, f1, values_match, ConfusionCounts};
pub use jaro::jaro;
pub use latency::LatencyStats;
pub use report::{
    Curves, EvalReport, ExtractionSummary, LatencySummary, Significance, TOOL_NAME,
};
pub use retrieval::{precision_at_k, recall_at_k};
pub use wilcoxon::{
    wilcoxon_signed_rank, wilcoxon_signed_rank_with, WilcoxonMethod, WilcoxonResult, EXACT_MAX_N,
};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("relevant set is empty")]
    EmptyRelevantSet,
    #[error("paired samples differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("no observations")]
    EmptySample,
    #[error("all paired differences are zero")]
    AllZeroDifferences,
}
