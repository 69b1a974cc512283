use std::collections::HashMap;
use std::sync::Arc;

use thiserror::Error;

use crate::preprocess::ScalerStats;
use crate::scalar::Scalar;
use crate::schema::{DatasetSchema, FieldKind, RawRecord};

/// Embedded categorical value: unit vector plus the text it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct TextValue<T> {
    pub vector: Arc<[T]>,
    pub text: Arc<str>,
}

/// A preprocessed field value.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldValue<T> {
    /// Standard-scaled number.
    Number(T),
    Flag(bool),
    Text(TextValue<T>),
    Missing,
}

impl<T: Scalar> FieldValue<T> {
    pub fn is_missing(&self) -> bool {
        matches!(self, FieldValue::Missing)
    }

    pub fn text(vector: Vec<T>, text: &str) -> Self {
        FieldValue::Text(TextValue {
            vector: vector.into(),
            text: text.into(),
        })
    }

    /// Whether this value may appear in a field of `kind`.
    pub fn fits(&self, kind: FieldKind) -> bool {
        matches!(
            (self, kind),
            (FieldValue::Missing, _)
                | (FieldValue::Number(_), FieldKind::Numeric)
                | (FieldValue::Flag(_), FieldKind::Boolean)
                | (FieldValue::Text(_), FieldKind::Categorical)
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcessedRecord<T> {
    pub id: u64,
    /// One value per schema field, in schema order.
    pub values: Vec<FieldValue<T>>,
}

#[derive(Debug, Error, PartialEq)]
pub enum DatasetError {
    #[error("record {id} has {got} values, schema has {expected} fields")]
    Arity { id: u64, expected: usize, got: usize },
    #[error("record {id}: value in field `{field}` does not match its kind")]
    KindMismatch { id: u64, field: String },
    #[error("record {id}: embedding in `{field}` has dimension {got}, expected {expected}")]
    Dimension {
        id: u64,
        field: String,
        expected: usize,
        got: usize,
    },
    #[error("duplicate record id {0}")]
    DuplicateId(u64),
    #[error("numeric field `{0}` has no scaler")]
    MissingScaler(String),
    #[error("originals do not line up with records")]
    Originals,
}

/// Records in the searchable feature space, with what is needed to map new
/// query values into it.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessedDataset<T> {
    schema: DatasetSchema,
    records: Vec<ProcessedRecord<T>>,
    /// Indexed like `schema.fields`; `Some` exactly for numeric fields.
    scalers: Vec<Option<ScalerStats<T>>>,
    embed_dim: usize,
    originals: Vec<RawRecord>,
    positions: HashMap<u64, usize>,
}

impl<T: Scalar> ProcessedDataset<T> {
    /// Assembles a dataset from already-processed parts, checking that every
    /// record covers every field with a value of the right kind.
    pub fn from_parts(
        schema: DatasetSchema,
        records: Vec<ProcessedRecord<T>>,
        scalers: Vec<Option<ScalerStats<T>>>,
        embed_dim: usize,
        originals: Vec<RawRecord>,
    ) -> Result<Self, DatasetError> {
        if scalers.len() != schema.fields.len() {
            return Err(DatasetError::MissingScaler(String::new()));
        }
        for (field, scaler) in schema.fields.iter().zip(&scalers) {
            if field.kind == FieldKind::Numeric && scaler.is_none() {
                return Err(DatasetError::MissingScaler(field.name.clone()));
            }
        }
        if originals.len() != records.len()
            || originals.iter().zip(&records).any(|(o, r)| o.id != r.id)
        {
            return Err(DatasetError::Originals);
        }
        let mut positions = HashMap::with_capacity(records.len());
        for (pos, record) in records.iter().enumerate() {
            if positions.insert(record.id, pos).is_some() {
                return Err(DatasetError::DuplicateId(record.id));
            }
            if record.values.len() != schema.fields.len() {
                return Err(DatasetError::Arity {
                    id: record.id,
                    expected: schema.fields.len(),
                    got: record.values.len(),
                });
            }
            for (field, value) in schema.fields.iter().zip(&record.values) {
                if !value.fits(field.kind) {
                    return Err(DatasetError::KindMismatch {
                        id: record.id,
                        field: field.name.clone(),
                    });
                }
                if let FieldValue::Text(t) = value {
                    if t.vector.len() != embed_dim {
                        return Err(DatasetError::Dimension {
                            id: record.id,
                            field: field.name.clone(),
                            expected: embed_dim,
                            got: t.vector.len(),
                        });
                    }
                }
            }
        }
        Ok(ProcessedDataset {
            schema,
            records,
            scalers,
            embed_dim,
            originals,
            positions,
        })
    }

    /// Dataset without raw originals (synthetic data, tests). Originals are
    /// reconstructed as empty records carrying only the id.
    pub fn from_records(
        schema: DatasetSchema,
        records: Vec<ProcessedRecord<T>>,
        embed_dim: usize,
    ) -> Result<Self, DatasetError> {
        let scalers = schema
            .fields
            .iter()
            .map(|f| (f.kind == FieldKind::Numeric).then(ScalerStats::identity))
            .collect();
        let originals = records.iter().map(|r| RawRecord::new(r.id)).collect();
        Self::from_parts(schema, records, scalers, embed_dim, originals)
    }

    pub fn schema(&self) -> &DatasetSchema {
        &self.schema
    }

    pub fn records(&self) -> &[ProcessedRecord<T>] {
        &self.records
    }

    pub fn record(&self, pos: usize) -> &ProcessedRecord<T> {
        &self.records[pos]
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn scalers(&self) -> &[Option<ScalerStats<T>>] {
        &self.scalers
    }

    pub fn scaler(&self, field: &str) -> Option<&ScalerStats<T>> {
        self.schema
            .field_index(field)
            .and_then(|i| self.scalers[i].as_ref())
    }

    pub fn originals(&self) -> &[RawRecord] {
        &self.originals
    }

    pub fn position(&self, id: u64) -> Option<usize> {
        self.positions.get(&id).copied()
    }

    pub fn original(&self, id: u64) -> Option<&RawRecord> {
        self.position(id).map(|p| &self.originals[p])
    }

    pub fn ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.records.iter().map(|r| r.id)
    }
}
