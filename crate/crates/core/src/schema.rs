//! Dataset schema, raw records and CSV ingestion.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SchemaError {
    #[error("schema has no fields")]
    EmptySchema,
    #[error("field name is empty")]
    EmptyFieldName,
    #[error("duplicate field `{0}`")]
    DuplicateField(String),
    #[error("field `{0}` has a negative weight")]
    NegativeWeight(String),
    #[error("field `{0}` has a non-finite weight")]
    NonFiniteWeight(String),
    #[error("id field `{0}` must not also be a schema field")]
    IdFieldIsFeature(String),
    #[error("CSV has no column for field `{0}`")]
    MissingColumn(String),
    #[error("malformed CSV at data row {row}: {reason}")]
    MalformedCsv { row: usize, reason: String },
    #[error("duplicate record id {0}")]
    DuplicateId(u64),
    #[error("unknown field `{0}` in record")]
    UnknownField(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("invalid schema JSON: {0}")]
    Json(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Numeric,
    Boolean,
    Categorical,
}

impl FieldKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FieldKind::Numeric => "numeric",
            FieldKind::Boolean => "boolean",
            FieldKind::Categorical => "categorical",
        }
    }
}

fn default_weight() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    pub kind: FieldKind,
    #[serde(default = "default_weight")]
    pub weight: f64,
    #[serde(default = "default_true")]
    pub allow_missing: bool,
}

impl FieldSpec {
    pub fn new(name: impl Into<String>, kind: FieldKind) -> Self {
        FieldSpec {
            name: name.into(),
            kind,
            weight: 1.0,
            allow_missing: true,
        }
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }
}

/// Ordered list of fields plus an optional identifier column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSchema {
    #[serde(default)]
    pub id_field: Option<String>,
    pub fields: Vec<FieldSpec>,
}

impl DatasetSchema {
    pub fn new(fields: Vec<FieldSpec>) -> Self {
        DatasetSchema {
            id_field: None,
            fields,
        }
    }

    /// The wine-review layout: `points` and `price` numeric, ten text fields.
    pub fn wine() -> Self {
        let numeric = ["points", "price"];
        let categorical = [
            "country",
            "description",
            "designation",
            "province",
            "region_1",
            "taster_name",
            "taster_twitter_handle",
            "title",
            "variety",
            "winery",
        ];
        let fields = numeric
            .iter()
            .map(|n| FieldSpec::new(*n, FieldKind::Numeric))
            .chain(
                categorical
                    .iter()
                    .map(|n| FieldSpec::new(*n, FieldKind::Categorical)),
            )
            .collect();
        DatasetSchema::new(fields)
    }

    pub fn field_index(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| f.name == name)
    }

    pub fn field(&self, name: &str) -> Option<&FieldSpec> {
        self.fields.iter().find(|f| f.name == name)
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn from_json_str(json: &str) -> Result<Self, SchemaError> {
        let schema: DatasetSchema =
            serde_json::from_str(json).map_err(|e| SchemaError::Json(e.to_string()))?;
        validate_schema(schema)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, SchemaError> {
        let text = std::fs::read_to_string(path).map_err(|e| SchemaError::Io(e.to_string()))?;
        Self::from_json_str(&text)
    }
}

/// Checks every schema invariant and returns the schema unchanged.
pub fn validate_schema(schema: DatasetSchema) -> Result<DatasetSchema, SchemaError> {
    if schema.fields.is_empty() {
        return Err(SchemaError::EmptySchema);
    }
    let mut seen = HashSet::new();
    for field in &schema.fields {
        if field.name.trim().is_empty() {
            return Err(SchemaError::EmptyFieldName);
        }
        if !seen.insert(field.name.as_str()) {
            return Err(SchemaError::DuplicateField(field.name.clone()));
        }
        if field.weight.is_nan() || field.weight.is_infinite() {
            return Err(SchemaError::NonFiniteWeight(field.name.clone()));
        }
        if field.weight < 0.0 {
            return Err(SchemaError::NegativeWeight(field.name.clone()));
        }
    }
    if let Some(id) = &schema.id_field {
        if seen.contains(id.as_str()) {
            return Err(SchemaError::IdFieldIsFeature(id.clone()));
        }
    }
    Ok(schema)
}

/// One unprocessed row. Absent keys are missing values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawRecord {
    pub id: u64,
    pub values: BTreeMap<String, String>,
}

impl RawRecord {
    pub fn new(id: u64) -> Self {
        RawRecord {
            id,
            values: BTreeMap::new(),
        }
    }

    pub fn with(mut self, field: &str, value: &str) -> Self {
        self.values.insert(field.to_string(), value.to_string());
        self
    }

    pub fn get(&self, field: &str) -> Option<&str> {
        self.values.get(field).map(String::as_str)
    }

    /// Rejects keys outside the schema.
    pub fn check_keys(&self, schema: &DatasetSchema) -> Result<(), SchemaError> {
        match self.values.keys().find(|k| schema.field_index(k).is_none()) {
            Some(k) => Err(SchemaError::UnknownField(k.clone())),
            None => Ok(()),
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &DatasetSchema) -> Result<Vec<RawRecord>, SchemaError> {
    let file = File::open(path).map_err(|e| SchemaError::Io(e.to_string()))?;
    load_csv_from_reader(file, schema)
}

/// Reads RFC-4180 CSV with a header row. Empty or whitespace-only cells are
/// missing; columns that are not schema fields are ignored.
pub fn load_csv_from_reader<R: Read>(
    reader: R,
    schema: &DatasetSchema,
) -> Result<Vec<RawRecord>, SchemaError> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let headers = csv
        .headers()
        .map_err(|e| SchemaError::MalformedCsv {
            row: 0,
            reason: e.to_string(),
        })?
        .clone();
    let column = |name: &str| headers.iter().position(|h| h.trim() == name);

    let mut columns = Vec::with_capacity(schema.fields.len());
    for field in &schema.fields {
        let idx = column(&field.name).ok_or_else(|| SchemaError::MissingColumn(field.name.clone()))?;
        columns.push((field.name.as_str(), idx));
    }
    let id_column = match &schema.id_field {
        Some(name) => Some(column(name).ok_or_else(|| SchemaError::MissingColumn(name.clone()))?),
        None => None,
    };

    let mut records = Vec::new();
    let mut ids = HashSet::new();
    for (row, result) in csv.records().enumerate() {
        let line = result.map_err(|e| SchemaError::MalformedCsv {
            row,
            reason: e.to_string(),
        })?;
        let id = match id_column {
            Some(idx) => {
                let cell = line.get(idx).unwrap_or("").trim();
                cell.parse::<u64>().map_err(|_| SchemaError::MalformedCsv {
                    row,
                    reason: format!("id `{cell}` is not a non-negative integer"),
                })?
            }
            None => row as u64,
        };
        if !ids.insert(id) {
            return Err(SchemaError::DuplicateId(id));
        }
        let mut record = RawRecord::new(id);
        for &(name, idx) in &columns {
            let cell = line.get(idx).unwrap_or("");
            if !cell.trim().is_empty() {
                record.values.insert(name.to_string(), cell.to_string());
            }
        }
        records.push(record);
    }
    Ok(records)
}
