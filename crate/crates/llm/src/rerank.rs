//! LLM re-ordering of a candidate pool. Never fails: any problem falls back
//! to the input order.

use std::collections::HashSet;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::backend::CompletionBackend;
use crate::json::parse_lenient;

pub const RERANK_SYSTEM_PROMPT: &str =
    "Order these items from best to worst match for the request. Output ONLY a JSON array of ids.";

/// A candidate as shown to the model: its id and displayable fields.
#[derive(Debug, Clone, PartialEq)]
pub struct RerankCandidate {
    pub id: u64,
    pub fields: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RerankOptions {
    /// Fields to show; `None` shows all.
    pub fields: Option<Vec<String>>,
    /// Per-field character limits.
    pub max_chars: IndexMap<String, usize>,
}

impl Default for RerankOptions {
    fn default() -> Self {
        RerankOptions {
            fields: None,
            max_chars: IndexMap::from([("description".to_string(), 300)]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RerankOutcome {
    pub ordered_ids: Vec<u64>,
    pub used_fallback: bool,
    pub raw_response: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn rerank_user_prompt(query_text: &str, candidates: &[RerankCandidate], opts: &RerankOptions) -> String {
    let mut out = format!("Request: {}\nCandidates:\n", one_line(query_text));
    for c in candidates {
        let parts: Vec<String> = c
            .fields
            .iter()
            .filter(|(name, value)| {
                !value.trim().is_empty() && opts.fields.as_ref().is_none_or(|keep| keep.iter().any(|k| k == name))
            })
            .map(|(name, value)| {
                let value = one_line(value);
                let value = match opts.max_chars.get(name) {
                    Some(&n) => value.chars().take(n).collect(),
                    None => value,
                };
                format!("{name}={value}")
            })
            .collect();
        out.push_str(&format!("{}: {}\n", c.id, parts.join("; ")));
    }
    out
}

fn as_id(v: &Value) -> Option<u64> {
    match v {
        Value::Number(n) => n.as_u64(),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

/// Applies a model's id list to the candidate order: unknown and repeated
/// ids are dropped, omitted candidates follow in their original order.
pub fn apply_order(candidates: &[u64], proposed: &[u64]) -> Vec<u64> {
    let known: HashSet<u64> = candidates.iter().copied().collect();
    let mut seen = HashSet::new();
    let mut out: Vec<u64> = proposed
        .iter()
        .copied()
        .filter(|id| known.contains(id) && seen.insert(*id))
        .collect();
    out.extend(candidates.iter().copied().filter(|id| !seen.contains(id)));
    out
}

pub fn rerank(
    query_text: &str,
    candidates: &[RerankCandidate],
    backend: &dyn CompletionBackend,
    opts: &RerankOptions,
) -> RerankOutcome {
    let input: Vec<u64> = candidates.iter().map(|c| c.id).collect();
    let fallback = |raw: Option<String>, error: String| {
        log::warn!("re-rank fell back to k-NN order: {error}");
        RerankOutcome {
            ordered_ids: input.clone(),
            used_fallback: true,
            raw_response: raw,
            error: Some(error),
        }
    };
    if candidates.is_empty() {
        return RerankOutcome {
            ordered_ids: Vec::new(),
            used_fallback: false,
            raw_response: None,
            error: None,
        };
    }
    let prompt = rerank_user_prompt(query_text, candidates, opts);
    let raw = match backend.complete(RERANK_SYSTEM_PROMPT, &prompt) {
        Ok(r) => r,
        Err(e) => return fallback(None, e.to_string()),
    };
    let proposed: Vec<u64> = match parse_lenient(&raw) {
        Ok(Value::Array(items)) => items.iter().filter_map(as_id).collect(),
        Ok(_) => return fallback(Some(raw), "response is not a JSON array".into()),
        Err(e) => return fallback(Some(raw), format!("response is not valid JSON ({e})")),
    };
    RerankOutcome {
        ordered_ids: apply_order(&input, &proposed),
        used_fallback: false,
        raw_response: Some(raw),
        error: None,
    }
}
