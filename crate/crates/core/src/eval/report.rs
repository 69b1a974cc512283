use serde::{Deserialize, Serialize};

use super::{ConfusionCounts, LatencyStats, WilcoxonMethod};

pub const TOOL_NAME: &str = "spelunker";

/// Mean precision and recall at K = 1..=k_max; index `i` holds K = i + 1.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Curves {
    pub precision_at_k: Vec<f64>,
    pub recall_at_k: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExtractionSummary {
    pub cases: usize,
    pub counts: ConfusionCounts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Mean Jaro similarity over fields whose key was extracted, whatever
    /// the value.
    pub mean_jaro: f64,
    pub jaro_fields: usize,
    pub failures: usize,
}

/// Paired test of plain vs re-ranked retrieval for one metric. `k` is
/// `None` for the test pooled over every K.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Significance {
    pub metric: String,
    pub k: Option<usize>,
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
    pub method: Option<WilcoxonMethod>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub structure: LatencyStats,
    pub search: LatencyStats,
    pub rerank: LatencyStats,
    pub total: LatencyStats,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tool: String,
    pub version: String,
    pub k_max: usize,
    pub cases: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plain: Option<Curves>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reranked: Option<Curves>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extraction: Option<ExtractionSummary>,
    pub significance: Vec<Significance>,
    pub latency: LatencySummary,
}

impl EvalReport {
    /// CSV of the curves: `k,plain_precision,plain_recall[,reranked_precision,reranked_recall]`.
    pub fn curves_csv(&self) -> String {
        let mut out = String::from("k,plain_precision,plain_recall");
        if self.reranked.is_some() {
            out.push_str(",reranked_precision,reranked_recall");
        }
        out.push('\n');
        let Some(plain) = &self.plain else {
            return out;
        };
        for i in 0..plain.precision_at_k.len() {
            out.push_str(&format!("{},{},{}", i + 1, plain.precision_at_k[i], plain.recall_at_k[i]));
            if let Some(r) = &self.reranked {
                out.push_str(&format!(",{},{}", r.precision_at_k[i], r.recall_at_k[i]));
            }
            out.push('\n');
        }
        out
    }
}
