//! Evaluation runs over a truth-case file: retrieval curves (plain and
//! re-ranked, with paired significance tests) and extraction scoring.

use std::collections::HashSet;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use spelunker_core::eval::{
    extraction_confusion, jaro, precision_at_k, recall_at_k, wilcoxon_signed_rank, ConfusionCounts, Curves, EvalError,
    EvalReport, ExtractionSummary, LatencyStats, LatencySummary, Significance, TOOL_NAME,
};
use spelunker_core::query::Validated;
use spelunker_core::{DatasetSchema, StructuredQuery};
use spelunker_llm::{structure_query, CompletionBackend};
use thiserror::Error;

use crate::config::RerankConfig;
use crate::pipeline::{parse_structured, Engine, RerankStage, ServiceError};

#[derive(Debug, Error)]
pub enum EvalRunError {
    #[error("cannot read truth file {path}: {reason}")]
    Read { path: String, reason: String },
    #[error("case {case}: relevant id {id} is not in the index")]
    UnknownRelevantId { case: usize, id: u64 },
    #[error("case {case}: {source}")]
    Case { case: usize, source: ServiceError },
    #[error("case {case}: {source}")]
    Metric { case: usize, source: EvalError },
    #[error("case {0} has no structured query and no backend was given to extract one")]
    NeedsBackend(usize),
    #[error("k_max must be at least 1")]
    InvalidKMax,
    #[error("no cases to evaluate")]
    NoCases,
}

impl EvalRunError {
    pub fn is_backend(&self) -> bool {
        matches!(self, EvalRunError::Case { source, .. } if source.is_backend())
    }
}

/// One line of a truth file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthCase {
    pub query: String,
    #[serde(default)]
    pub structured: Option<Value>,
    #[serde(default)]
    pub relevant_ids: Vec<u64>,
}

pub fn load_truth(path: impl AsRef<Path>) -> Result<Vec<TruthCase>, EvalRunError> {
    let path = path.as_ref();
    let err = |reason: String| EvalRunError::Read {
        path: path.display().to_string(),
        reason,
    };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| err(e.to_string()))
}

fn report_skeleton(k_max: usize, cases: usize) -> EvalReport {
    EvalReport {
        tool: TOOL_NAME.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        k_max,
        cases,
        ..Default::default()
    }
}

fn mean_curve(per_case: &[Vec<f64>], k_max: usize) -> Vec<f64> {
    (0..k_max)
        .map(|i| per_case.iter().map(|c| c[i]).sum::<f64>() / per_case.len() as f64)
        .collect()
}

fn significance(metric: &str, k: Option<usize>, plain: &[f64], reranked: &[f64]) -> Significance {
    match wilcoxon_signed_rank(reranked, plain) {
        Ok(r) => Significance {
            metric: metric.into(),
            k,
            statistic: r.statistic,
            p_value: r.p_value,
            n: r.n,
            method: Some(r.method),
            note: None,
        },
        Err(EvalError::AllZeroDifferences) => Significance {
            metric: metric.into(),
            k,
            statistic: 0.0,
            p_value: 1.0,
            n: 0,
            method: None,
            note: Some("all paired differences are zero".into()),
        },
        Err(e) => Significance {
            metric: metric.into(),
            k,
            statistic: f64::NAN,
            p_value: f64::NAN,
            n: 0,
            method: None,
            note: Some(e.to_string()),
        },
    }
}

struct CaseScores {
    precision: Vec<f64>,
    recall: Vec<f64>,
}

fn score(retrieved: &[u64], relevant: &HashSet<u64>, k_max: usize, case: usize) -> Result<CaseScores, EvalRunError> {
    let mut precision = Vec::with_capacity(k_max);
    let mut recall = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        precision.push(precision_at_k(retrieved, relevant, k));
        recall.push(recall_at_k(retrieved, relevant, k).map_err(|source| EvalRunError::Metric { case, source })?);
    }
    Ok(CaseScores { precision, recall })
}

/// Retrieval run. Every case is searched without re-ranking; when
/// `rerank` is given each case is also searched with one re-ranked pool
/// sized for `k_max` and the two runs are compared with paired Wilcoxon
/// tests per K and pooled over all K.
pub fn evaluate_retrieval(
    engine: &Engine,
    cases: &[TruthCase],
    k_max: usize,
    backend: Option<&dyn CompletionBackend>,
    rerank: Option<&RerankConfig>,
) -> Result<EvalReport, EvalRunError> {
    if k_max == 0 {
        return Err(EvalRunError::InvalidKMax);
    }
    if cases.is_empty() {
        return Err(EvalRunError::NoCases);
    }
    let schema = engine.schema();
    let mut plain_scores = Vec::new();
    let mut rerank_scores = Vec::new();
    let (mut structure_ms, mut search_ms, mut rerank_ms, mut total_ms) = (vec![], vec![], vec![], vec![]);

    for (i, case) in cases.iter().enumerate() {
        if let Some(&id) = case.relevant_ids.iter().find(|&&id| engine.tree().dataset().position(id).is_none()) {
            return Err(EvalRunError::UnknownRelevantId { case: i, id });
        }
        let relevant: HashSet<u64> = case.relevant_ids.iter().copied().collect();
        let wrap = |source: ServiceError| EvalRunError::Case { case: i, source };
        let start = Instant::now();
        let validated = match &case.structured {
            Some(v) if !v.is_null() => parse_structured(schema, v, None).map_err(wrap)?,
            _ => {
                let backend = backend.ok_or(EvalRunError::NeedsBackend(i))?;
                let ex = structure_query(&case.query, schema, backend).map_err(|e| wrap(e.into()))?;
                Validated {
                    query: ex.query,
                    warnings: ex.warnings,
                }
            }
        };
        let structured_in = start.elapsed().as_secs_f64() * 1e3;

        let plain = engine.run(validated.clone(), k_max, None, structured_in).map_err(wrap)?;
        let ids: Vec<u64> = plain.hits.iter().map(|h| h.id).collect();
        plain_scores.push(score(&ids, &relevant, k_max, i)?);
        let pt = plain.timings.unwrap_or_default();
        structure_ms.push(structured_in);
        search_ms.push(pt.search_ms);

        match (rerank, backend) {
            (Some(config), Some(backend)) => {
                let stage = RerankStage {
                    backend,
                    text: &case.query,
                    config,
                };
                let rr = engine.run(validated, k_max, Some(stage), structured_in).map_err(wrap)?;
                let ids: Vec<u64> = rr.hits.iter().map(|h| h.id).collect();
                rerank_scores.push(score(&ids, &relevant, k_max, i)?);
                let rt = rr.timings.unwrap_or_default();
                rerank_ms.push(rt.rerank_ms);
                total_ms.push(rt.total_ms);
            }
            (Some(_), None) => return Err(EvalRunError::NeedsBackend(i)),
            _ => total_ms.push(pt.total_ms),
        }
    }

    let mut report = report_skeleton(k_max, cases.len());
    let curves = |scores: &[CaseScores]| Curves {
        precision_at_k: mean_curve(&scores.iter().map(|s| s.precision.clone()).collect::<Vec<_>>(), k_max),
        recall_at_k: mean_curve(&scores.iter().map(|s| s.recall.clone()).collect::<Vec<_>>(), k_max),
    };
    report.plain = Some(curves(&plain_scores));
    if !rerank_scores.is_empty() {
        report.reranked = Some(curves(&rerank_scores));
        for (metric, pick) in [
            ("precision", (|s: &CaseScores| s.precision.clone()) as fn(&CaseScores) -> Vec<f64>),
            ("recall", |s: &CaseScores| s.recall.clone()),
        ] {
            let plain: Vec<Vec<f64>> = plain_scores.iter().map(pick).collect();
            let rr: Vec<Vec<f64>> = rerank_scores.iter().map(pick).collect();
            for k in 0..k_max {
                let x: Vec<f64> = plain.iter().map(|c| c[k]).collect();
                let y: Vec<f64> = rr.iter().map(|c| c[k]).collect();
                report.significance.push(significance(metric, Some(k + 1), &x, &y));
            }
            let x: Vec<f64> = plain.iter().flatten().copied().collect();
            let y: Vec<f64> = rr.iter().flatten().copied().collect();
            report.significance.push(significance(metric, None, &x, &y));
        }
    }
    report.latency = LatencySummary {
        structure: LatencyStats::from_samples(&structure_ms),
        search: LatencyStats::from_samples(&search_ms),
        rerank: LatencyStats::from_samples(&rerank_ms),
        total: LatencyStats::from_samples(&total_ms),
    };
    Ok(report)
}

fn rendering(v: &spelunker_core::QueryValue) -> String {
    v.to_string().trim().to_lowercase()
}

/// Extraction run: each case with a `structured` truth is sent through the
/// backend and scored attribute by attribute. Backend or parse failures
/// count as empty predictions.
pub fn evaluate_extraction(
    schema: &DatasetSchema,
    cases: &[TruthCase],
    backend: &dyn CompletionBackend,
) -> Result<EvalReport, EvalRunError> {
    let mut counts = ConfusionCounts::default();
    let mut jaro_sum = 0.0;
    let mut jaro_fields = 0;
    let mut failures = 0;
    let mut scored = 0;
    let mut latency = Vec::new();
    for (i, case) in cases.iter().enumerate() {
        let Some(truth) = case.structured.as_ref().filter(|v| !v.is_null()) else {
            continue;
        };
        let truth = parse_structured(schema, truth, None)
            .map_err(|source| EvalRunError::Case { case: i, source })?
            .query;
        scored += 1;
        let start = Instant::now();
        let predicted = match structure_query(&case.query, schema, backend) {
            Ok(ex) => ex.query,
            Err(e) => {
                log::warn!("case {i}: extraction failed: {e}");
                failures += 1;
                StructuredQuery::new()
            }
        };
        latency.push(start.elapsed().as_secs_f64() * 1e3);
        counts += extraction_confusion(&truth, &predicted);
        for (key, pv) in &predicted.values {
            if let Some(tv) = truth.values.get(key) {
                jaro_sum += jaro(&rendering(tv), &rendering(pv));
                jaro_fields += 1;
            }
        }
    }
    if scored == 0 {
        return Err(EvalRunError::NoCases);
    }
    let mut report = report_skeleton(0, scored);
    report.extraction = Some(ExtractionSummary {
        cases: scored,
        counts,
        precision: counts.precision(),
        recall: counts.recall(),
        f1: counts.f1(),
        mean_jaro: if jaro_fields == 0 { 0.0 } else { jaro_sum / jaro_fields as f64 },
        jaro_fields,
        failures,
    });
    let stats = LatencyStats::from_samples(&latency);
    report.latency = LatencySummary {
        structure: stats,
        total: stats,
        ..Default::default()
    };
    Ok(report)
}
