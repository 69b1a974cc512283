//! Structured attribute queries: the JSON shape an extractor produces, its
//! validation against a schema, and its mapping into the feature space.

use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::dataset::{FieldValue, ProcessedDataset, TextValue};
use crate::metric::{MetricError, QueryPoint};
use crate::preprocess::{normalize_embedding, parse_boolean, scale_numeric, EmbedError, EmbeddingProvider};
use crate::scalar::Scalar;
use crate::schema::{DatasetSchema, FieldKind};

#[derive(Debug, Error, PartialEq)]
pub enum QueryError {
    #[error("structured query must be a JSON object")]
    NotAnObject,
    #[error("unknown field `{0}`")]
    UnknownField(String),
    #[error("field `{field}` is numeric but `{value}` is not a number")]
    BadNumeric { field: String, value: String },
    #[error("field `{field}` is boolean but `{value}` is not a recognized boolean")]
    BadBoolean { field: String, value: String },
    #[error("field `{0}` has an unsupported value type")]
    BadValue(String),
    #[error("weight for `{0}` must be finite and positive")]
    InvalidWeight(String),
    #[error("query has no usable attributes")]
    Empty,
    #[error("every queried field has weight zero")]
    NoWeightedFields,
    #[error(transparent)]
    Embedding(#[from] EmbedError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// A target value as written in a structured query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum QueryValue {
    Bool(bool),
    Number(f64),
    Text(String),
}

impl fmt::Display for QueryValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QueryValue::Bool(b) => write!(f, "{b}"),
            QueryValue::Number(n) => write!(f, "{n}"),
            QueryValue::Text(t) => f.write_str(t),
        }
    }
}

impl From<&str> for QueryValue {
    fn from(s: &str) -> Self {
        QueryValue::Text(s.to_string())
    }
}

impl From<f64> for QueryValue {
    fn from(n: f64) -> Self {
        QueryValue::Number(n)
    }
}

/// Partial field → target mapping with optional per-field weight overrides.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StructuredQuery {
    pub values: IndexMap<String, QueryValue>,
    #[serde(default, skip_serializing_if = "IndexMap::is_empty")]
    pub weights: IndexMap<String, f64>,
}

/// A validated query plus the non-fatal problems found on the way.
#[derive(Debug, Clone, PartialEq)]
pub struct Validated {
    pub query: StructuredQuery,
    pub warnings: Vec<String>,
}

/// Schema name for `key`: exact match first, then case-insensitive.
pub fn resolve_field<'a>(schema: &'a DatasetSchema, key: &str) -> Option<&'a str> {
    schema
        .field(key)
        .or_else(|| {
            let folded = key.trim().to_lowercase();
            schema.fields.iter().find(|f| f.name.to_lowercase() == folded)
        })
        .map(|f| f.name.as_str())
}

fn coerce(kind: FieldKind, field: &str, value: &QueryValue) -> Result<Option<QueryValue>, QueryError> {
    Ok(match (kind, value) {
        (FieldKind::Numeric, QueryValue::Number(n)) if n.is_finite() => Some(QueryValue::Number(*n)),
        (FieldKind::Numeric, QueryValue::Text(t)) => match t.trim().parse::<f64>() {
            Ok(n) if n.is_finite() => Some(QueryValue::Number(n)),
            _ => {
                return Err(QueryError::BadNumeric {
                    field: field.to_string(),
                    value: t.clone(),
                })
            }
        },
        (FieldKind::Numeric, other) => {
            return Err(QueryError::BadNumeric {
                field: field.to_string(),
                value: other.to_string(),
            })
        }
        (FieldKind::Boolean, QueryValue::Bool(b)) => Some(QueryValue::Bool(*b)),
        (FieldKind::Boolean, other) => {
            let raw = other.to_string();
            match parse_boolean(&raw) {
                Ok(Some(b)) => Some(QueryValue::Bool(b)),
                _ => {
                    return Err(QueryError::BadBoolean {
                        field: field.to_string(),
                        value: raw,
                    })
                }
            }
        }
        (FieldKind::Categorical, QueryValue::Text(t)) if t.trim().is_empty() => None,
        (FieldKind::Categorical, QueryValue::Text(t)) => Some(QueryValue::Text(t.trim().to_string())),
        (FieldKind::Categorical, other) => Some(QueryValue::Text(other.to_string())),
    })
}

impl StructuredQuery {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, field: &str, value: impl Into<QueryValue>) -> Self {
        self.values.insert(field.to_string(), value.into());
        self
    }

    pub fn with_weight(mut self, field: &str, weight: f64) -> Self {
        self.weights.insert(field.to_string(), weight);
        self
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Validates a JSON object of field → value. Unknown keys, nulls and
    /// blank texts are dropped with a warning; type errors are fatal.
    pub fn from_json_object(map: &Map<String, Value>, schema: &DatasetSchema) -> Result<Validated, QueryError> {
        let mut raw = StructuredQuery::new();
        let mut warnings = Vec::new();
        for (key, value) in map {
            let value = match value {
                Value::Null => {
                    warnings.push(format!("dropped `{key}`: null value"));
                    continue;
                }
                Value::Bool(b) => QueryValue::Bool(*b),
                Value::Number(n) => QueryValue::Number(n.as_f64().unwrap_or(f64::NAN)),
                Value::String(s) => QueryValue::Text(s.clone()),
                Value::Array(_) | Value::Object(_) => {
                    if resolve_field(schema, key).is_none() {
                        warnings.push(format!("dropped unknown field `{key}`"));
                        continue;
                    }
                    return Err(QueryError::BadValue(key.clone()));
                }
            };
            raw.values.insert(key.clone(), value);
        }
        let mut validated = raw.validate(schema)?;
        warnings.append(&mut validated.warnings);
        validated.warnings = warnings;
        Ok(validated)
    }

    pub fn from_json_value(value: &Value, schema: &DatasetSchema) -> Result<Validated, QueryError> {
        match value {
            Value::Object(map) => Self::from_json_object(map, schema),
            _ => Err(QueryError::NotAnObject),
        }
    }

    /// Canonicalizes keys to schema names (case-insensitive fallback),
    /// coerces values to their field kind, orders entries by schema order
    /// and checks weight overrides.
    pub fn validate(&self, schema: &DatasetSchema) -> Result<Validated, QueryError> {
        let mut warnings = Vec::new();
        let mut found: IndexMap<&str, QueryValue> = IndexMap::new();
        for (key, value) in &self.values {
            let Some(name) = resolve_field(schema, key) else {
                warnings.push(format!("dropped unknown field `{key}`"));
                continue;
            };
            if found.contains_key(name) {
                warnings.push(format!("dropped duplicate field `{key}`"));
                continue;
            }
            let kind = schema.field(name).map(|f| f.kind).unwrap_or(FieldKind::Categorical);
            match coerce(kind, name, value)? {
                Some(v) => {
                    found.insert(name, v);
                }
                None => warnings.push(format!("dropped `{key}`: empty value")),
            }
        }
        let mut values = IndexMap::new();
        for field in &schema.fields {
            if let Some(v) = found.swap_remove(field.name.as_str()) {
                values.insert(field.name.clone(), v);
            }
        }
        if values.is_empty() {
            return Err(QueryError::Empty);
        }
        let mut weights = IndexMap::new();
        for (key, &w) in &self.weights {
            let name = resolve_field(schema, key).ok_or_else(|| QueryError::UnknownField(key.clone()))?;
            if !(w.is_finite() && w > 0.0) {
                return Err(QueryError::InvalidWeight(name.to_string()));
            }
            if !values.contains_key(name) {
                warnings.push(format!("weight for `{name}` ignored: field not queried"));
                continue;
            }
            weights.insert(name.to_string(), w);
        }
        Ok(Validated {
            query: StructuredQuery { values, weights },
            warnings,
        })
    }

    /// Weight actually used per queried field: the override if present,
    /// else the schema weight. Fields whose weight is zero are left out.
    pub fn effective_weights(&self, schema: &DatasetSchema) -> IndexMap<String, f64> {
        self.values
            .keys()
            .filter_map(|name| {
                let w = self
                    .weights
                    .get(name)
                    .copied()
                    .or_else(|| schema.field(name).map(|f| f.weight))?;
                (w > 0.0).then(|| (name.clone(), w))
            })
            .collect()
    }

    /// Maps a validated query into the dataset's feature space: numerics
    /// are scaled with the dataset's scalers, texts are embedded.
    pub fn to_query_point<T: Scalar>(
        &self,
        dataset: &ProcessedDataset<T>,
        provider: &dyn EmbeddingProvider,
    ) -> Result<QueryPoint<T>, QueryError> {
        let schema = dataset.schema();
        let weights = self.effective_weights(schema);
        if weights.is_empty() {
            return Err(QueryError::NoWeightedFields);
        }
        let texts: Vec<String> = weights
            .keys()
            .filter(|name| schema.field(name).map(|f| f.kind) == Some(FieldKind::Categorical))
            .map(|name| self.values[name.as_str()].to_string())
            .collect();
        let mut vectors = if texts.is_empty() {
            Vec::new()
        } else {
            provider.embed_batch(&texts)?
        }
        .into_iter();

        let mut terms = Vec::with_capacity(weights.len());
        for (name, &w) in &weights {
            let field = schema.field(name).ok_or_else(|| QueryError::UnknownField(name.clone()))?;
            let value = &self.values[name.as_str()];
            let fv = match (field.kind, value) {
                (FieldKind::Numeric, QueryValue::Number(n)) => {
                    let stats = dataset
                        .scaler(name)
                        .ok_or_else(|| QueryError::UnknownField(name.clone()))?;
                    let scaled = scale_numeric(stats, T::of(*n)).map_err(|_| QueryError::BadNumeric {
                        field: name.clone(),
                        value: n.to_string(),
                    })?;
                    FieldValue::Number(scaled)
                }
                (FieldKind::Boolean, QueryValue::Bool(b)) => FieldValue::Flag(*b),
                (FieldKind::Categorical, v) => {
                    let raw = vectors.next().ok_or(EmbedError::Count {
                        expected: texts.len(),
                        got: 0,
                    })?;
                    let vector = normalize_embedding::<T>(&raw, dataset.embed_dim())?;
                    FieldValue::Text(TextValue {
                        vector: vector.into(),
                        text: v.to_string().into(),
                    })
                }
                _ => return Err(QueryError::BadValue(name.clone())),
            };
            terms.push((name.as_str(), fv, T::of(w)));
        }
        let point = QueryPoint::new(schema, terms)?;
        point.check_dimension(dataset.embed_dim())?;
        Ok(point)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::FieldSpec;
    use serde_json::json;

    fn schema() -> DatasetSchema {
        DatasetSchema::new(vec![
            FieldSpec::new("price", FieldKind::Numeric),
            FieldSpec::new("country", FieldKind::Categorical),
            FieldSpec::new("organic", FieldKind::Boolean),
            FieldSpec::new("ignored", FieldKind::Numeric).with_weight(0.0),
        ])
    }

    #[test]
    fn unknown_keys_dropped_with_warning() {
        let v = StructuredQuery::from_json_value(&json!({"country": "France", "bogus_field": 1}), &schema())
            .unwrap();
        assert_eq!(v.query.values.len(), 1);
        assert_eq!(v.query.values["country"], QueryValue::Text("France".into()));
        assert_eq!(v.warnings.len(), 1);
        assert!(v.warnings[0].contains("bogus_field"));
    }

    #[test]
    fn coercion_and_schema_order() {
        let v = StructuredQuery::from_json_value(
            &json!({"Organic": "yes", "country": 1999, "PRICE": "30"}),
            &schema(),
        )
        .unwrap();
        let keys: Vec<_> = v.query.values.keys().cloned().collect();
        assert_eq!(keys, ["price", "country", "organic"]);
        assert_eq!(v.query.values["price"], QueryValue::Number(30.0));
        assert_eq!(v.query.values["country"], QueryValue::Text("1999".into()));
        assert_eq!(v.query.values["organic"], QueryValue::Bool(true));
    }

    #[test]
    fn type_errors_are_fatal() {
        assert_eq!(
            StructuredQuery::from_json_value(&json!({"price": "cheap"}), &schema()).unwrap_err(),
            QueryError::BadNumeric { field: "price".into(), value: "cheap".into() }
        );
        assert!(matches!(
            StructuredQuery::from_json_value(&json!({"organic": "sometimes"}), &schema()).unwrap_err(),
            QueryError::BadBoolean { .. }
        ));
        assert_eq!(
            StructuredQuery::from_json_value(&json!([1, 2]), &schema()).unwrap_err(),
            QueryError::NotAnObject
        );
    }

    #[test]
    fn empty_after_dropping() {
        assert_eq!(
            StructuredQuery::from_json_value(&json!({"grape": "x", "country": null}), &schema()).unwrap_err(),
            QueryError::Empty
        );
    }

    #[test]
    fn weights_validated() {
        let q = StructuredQuery::new().with("price", 10.0).with_weight("grape", 2.0);
        assert_eq!(q.validate(&schema()).unwrap_err(), QueryError::UnknownField("grape".into()));
        let q = StructuredQuery::new().with("price", 10.0).with_weight("price", -2.0);
        assert_eq!(q.validate(&schema()).unwrap_err(), QueryError::InvalidWeight("price".into()));
        let q = StructuredQuery::new().with("price", 10.0).with_weight("country", 2.0);
        let v = q.validate(&schema()).unwrap();
        assert!(v.query.weights.is_empty());
        assert_eq!(v.warnings.len(), 1);
    }

    #[test]
    fn effective_weights_skip_zero() {
        let q = StructuredQuery::new()
            .with("price", 1.0)
            .with("ignored", 2.0)
            .with_weight("price", 4.0);
        let w = q.effective_weights(&schema());
        assert_eq!(w.len(), 1);
        assert_eq!(w["price"], 4.0);
    }

    #[test]
    fn serde_shape() {
        let q = StructuredQuery::new().with("country", "France").with("price", 30.0);
        let text = serde_json::to_string(&q).unwrap();
        assert_eq!(text, r#"{"values":{"country":"France","price":30.0}}"#);
        let back: StructuredQuery = serde_json::from_str(&text).unwrap();
        assert_eq!(back, q);
    }
}
