//! Natural language → [`StructuredQuery`] via a completion backend.

use spelunker_core::query::{QueryError, StructuredQuery};
use spelunker_core::DatasetSchema;
use thiserror::Error;

use crate::backend::{BackendError, CompletionBackend};
use crate::json::parse_lenient;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GatewayError {
    #[error("query text is empty")]
    EmptyText,
    #[error("LLM backend failure: {0}")]
    BackendFailure(#[from] BackendError),
    #[error("LLM response could not be used after a repair attempt: {reason}")]
    UnparseableResponse { reason: String, response: String },
    #[error("LLM response contained no usable attributes")]
    EmptyExtraction { response: String, warnings: Vec<String> },
}

/// Result of a successful extraction.
#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub query: StructuredQuery,
    pub warnings: Vec<String>,
    /// Every raw backend reply, in order (two when a repair was needed).
    pub responses: Vec<String>,
}

pub fn structuring_system_prompt(schema: &DatasetSchema) -> String {
    let fields: Vec<String> = schema
        .fields
        .iter()
        .map(|f| format!("{} ({})", f.name, f.kind.as_str()))
        .collect();
    format!(
        "You convert wine search requests into JSON. Allowed keys: {}. Output ONLY a JSON object. Omit attributes the user did not mention.",
        fields.join(", ")
    )
}

fn repair_prompt(text: &str, reason: &str) -> String {
    format!("{text}\n\nYour previous reply was rejected: {reason}. Reply again with ONLY a JSON object using the allowed keys.")
}

enum Attempt {
    Ok(Extraction),
    Empty(Vec<String>),
    Invalid(String),
}

fn interpret(response: &str, schema: &DatasetSchema) -> Attempt {
    let value = match parse_lenient(response) {
        Ok(v) => v,
        Err(e) => return Attempt::Invalid(format!("not valid JSON ({e})")),
    };
    match StructuredQuery::from_json_value(&value, schema) {
        Ok(v) => Attempt::Ok(Extraction {
            query: v.query,
            warnings: v.warnings,
            responses: Vec::new(),
        }),
        Err(QueryError::Empty) => {
            let warnings = match value.as_object() {
                Some(map) => map
                    .keys()
                    .filter(|k| schema.field(k).is_none())
                    .map(|k| format!("dropped unknown field `{k}`"))
                    .collect(),
                None => Vec::new(),
            };
            Attempt::Empty(warnings)
        }
        Err(e) => Attempt::Invalid(e.to_string()),
    }
}

/// Asks the backend for a JSON object of schema fields. A reply that is not
/// JSON or fails validation gets one repair round with the error appended.
pub fn structure_query(
    text: &str,
    schema: &DatasetSchema,
    backend: &dyn CompletionBackend,
) -> Result<Extraction, GatewayError> {
    let text = text.trim();
    if text.is_empty() {
        return Err(GatewayError::EmptyText);
    }
    let system = structuring_system_prompt(schema);
    let mut responses = Vec::new();
    let mut user = text.to_string();
    for round in 0..2 {
        let response = backend.complete(&system, &user)?;
        responses.push(response.clone());
        match interpret(&response, schema) {
            Attempt::Ok(mut ex) => {
                for w in &ex.warnings {
                    log::warn!("structuring: {w}");
                }
                ex.responses = responses;
                return Ok(ex);
            }
            Attempt::Empty(warnings) => return Err(GatewayError::EmptyExtraction { response, warnings }),
            Attempt::Invalid(reason) if round == 0 => {
                log::warn!("structuring reply rejected ({reason}); asking for a repair");
                user = repair_prompt(text, &reason);
            }
            Attempt::Invalid(reason) => return Err(GatewayError::UnparseableResponse { reason, response }),
        }
    }
    unreachable!("loop returns on the second round")
}
