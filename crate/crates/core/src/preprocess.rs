//! Raw records to the searchable feature space: standard scaling for
//! numerics, 0/1 for booleans, unit-norm embeddings for categorical text.

use std::collections::HashMap;
use std::sync::Arc;

use thiserror::Error;

use crate::dataset::{DatasetError, FieldValue, ProcessedDataset, ProcessedRecord, TextValue};
use crate::scalar::Scalar;
use crate::schema::{DatasetSchema, FieldKind, RawRecord, SchemaError};

/// Population standard deviations below this are treated as constant columns.
pub const CONSTANT_STD: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum EmbedError {
    #[error("embedding dimension must be at least 8, got {0}")]
    InvalidDimension(usize),
    #[error("provider returned {got} vectors for {expected} texts")]
    Count { expected: usize, got: usize },
    #[error("provider returned a vector of dimension {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("provider returned a zero or non-finite vector")]
    Degenerate,
    #[error("embedding provider failed: {0}")]
    Provider(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum PreprocessError {
    #[error("non-finite value {0}")]
    NonFinite(f64),
    #[error("unrecognized boolean `{0}`")]
    UnrecognizedBoolean(String),
    #[error("record {id}: field `{field}` is not numeric")]
    NonNumericValue { field: String, id: u64 },
    #[error("record {id}: field `{field}` is not a recognized boolean")]
    UnrecognizedBooleanField { field: String, id: u64 },
    #[error("record {id}: field `{field}` is missing and does not allow missing values")]
    MissingValue { field: String, id: u64 },
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Embedding(#[from] EmbedError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalerStats<T> {
    pub mean: T,
    pub std: T,
    pub constant: bool,
}

impl<T: Scalar> ScalerStats<T> {
    /// mean 0, std 1: values pass through unchanged.
    pub fn identity() -> Self {
        ScalerStats {
            mean: T::zero(),
            std: T::one(),
            constant: false,
        }
    }

    pub fn unscale(&self, scaled: T) -> T {
        scaled * self.std + self.mean
    }
}

pub fn fit_numeric_scaler<T: Scalar>(values: &[T]) -> ScalerStats<T> {
    if values.is_empty() {
        return ScalerStats {
            mean: T::zero(),
            std: T::one(),
            constant: true,
        };
    }
    let n = T::of(values.len() as f64);
    let mean = values.iter().copied().sum::<T>() / n;
    let var = values
        .iter()
        .map(|&v| (v - mean) * (v - mean))
        .sum::<T>()
        / n;
    let std = var.sqrt();
    if std < T::of(CONSTANT_STD) {
        ScalerStats {
            mean,
            std: T::one(),
            constant: true,
        }
    } else {
        ScalerStats {
            mean,
            std,
            constant: false,
        }
    }
}

pub fn scale_numeric<T: Scalar>(stats: &ScalerStats<T>, x: T) -> Result<T, PreprocessError> {
    if !x.is_finite() {
        return Err(PreprocessError::NonFinite(x.to_f64_lossy()));
    }
    if stats.constant {
        return Ok(T::zero());
    }
    Ok((x - stats.mean) / stats.std)
}

/// `Ok(None)` for an empty cell.
pub fn parse_boolean(raw: &str) -> Result<Option<bool>, PreprocessError> {
    let token = raw.trim().to_lowercase();
    match token.as_str() {
        "" => Ok(None),
        "true" | "yes" | "1" | "y" => Ok(Some(true)),
        "false" | "no" | "0" | "n" => Ok(Some(false)),
        _ => Err(PreprocessError::UnrecognizedBoolean(raw.to_string())),
    }
}

/// Parses a raw numeric cell. Thousands separators are not accepted.
pub fn parse_numeric<T: Scalar>(raw: &str) -> Option<T> {
    raw.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .map(T::of)
}

/// Turns texts into unit vectors of a fixed dimension.
///
/// Implementations receive only non-blank texts and must return one vector
/// per text, in order. They must tolerate concurrent calls.
pub trait EmbeddingProvider: Send + Sync {
    fn dimension(&self) -> usize;

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError>;

    fn embed(&self, text: &str) -> Result<Vec<f32>, EmbedError> {
        let mut out = self.embed_batch(&[text.to_string()])?;
        out.pop().ok_or(EmbedError::Count {
            expected: 1,
            got: 0,
        })
    }
}

impl<P: EmbeddingProvider + ?Sized> EmbeddingProvider for Arc<P> {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError> {
        (**self).embed_batch(texts)
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
const BOUNDARY: char = '#';

fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// Signed feature hashing of character trigrams.
///
/// The text is trimmed and lowercased, padded with one `#` on each side, and
/// each trigram adds ±1 to bucket `fnv1a64(trigram) % dim` (sign from the
/// hash's top bit). Returns `None` for blank text.
pub fn local_embed(text: &str, dim: usize) -> Option<Vec<f32>> {
    let text = text.trim();
    if text.is_empty() {
        return None;
    }
    let mut chars = vec![BOUNDARY];
    chars.extend(text.to_lowercase().chars());
    chars.push(BOUNDARY);

    let mut acc = vec![0.0f64; dim];
    let mut first_bucket = None;
    let mut buf = String::with_capacity(12);
    for window in chars.windows(3) {
        buf.clear();
        buf.extend(window);
        let h = fnv1a64(buf.as_bytes());
        let bucket = (h % dim as u64) as usize;
        first_bucket.get_or_insert(bucket);
        acc[bucket] += if h >> 63 == 0 { 1.0 } else { -1.0 };
    }
    let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        // every trigram cancelled out; fall back to a single basis vector
        let mut v = vec![0.0f32; dim];
        v[first_bucket.unwrap_or(0)] = 1.0;
        return Some(v);
    }
    Some(acc.iter().map(|v| (v / norm) as f32).collect())
}

/// Deterministic offline embedder built on [`local_embed`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocalEmbedder {
    dim: usize,
}

impl LocalEmbedder {
    pub const DEFAULT_DIM: usize = 64;

    pub fn new(dim: usize) -> Result<Self, EmbedError> {
        if dim < 8 {
            return Err(EmbedError::InvalidDimension(dim));
        }
        Ok(LocalEmbedder { dim })
    }
}

impl Default for LocalEmbedder {
    fn default() -> Self {
        LocalEmbedder {
            dim: Self::DEFAULT_DIM,
        }
    }
}

impl EmbeddingProvider for LocalEmbedder {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError> {
        texts
            .iter()
            .map(|t| local_embed(t, self.dim).ok_or(EmbedError::Degenerate))
            .collect()
    }
}

/// Re-normalizes a provider vector and rounds it to `f32` precision, the
/// precision embeddings are persisted at.
pub fn normalize_embedding<T: Scalar>(raw: &[f32], dim: usize) -> Result<Vec<T>, EmbedError> {
    if raw.len() != dim {
        return Err(EmbedError::Dimension {
            expected: dim,
            got: raw.len(),
        });
    }
    let norm = raw.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
    if !norm.is_finite() || norm == 0.0 {
        return Err(EmbedError::Degenerate);
    }
    Ok(raw
        .iter()
        .map(|&v| T::of(((v as f64) / norm) as f32 as f64))
        .collect())
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BuildOptions {
    /// Categorical texts longer than this many characters are cut before
    /// embedding. `None` embeds the full text.
    pub max_text_chars: Option<usize>,
}

fn prepare_text(raw: &str, opts: &BuildOptions) -> String {
    let text = raw.trim();
    match opts.max_text_chars {
        Some(n) => text.chars().take(n).collect(),
        None => text.to_string(),
    }
}

pub fn build_processed_dataset<T: Scalar>(
    records: Vec<RawRecord>,
    schema: &DatasetSchema,
    provider: &dyn EmbeddingProvider,
) -> Result<ProcessedDataset<T>, PreprocessError> {
    build_processed_dataset_with(records, schema, provider, &BuildOptions::default())
}

pub fn build_processed_dataset_with<T: Scalar>(
    records: Vec<RawRecord>,
    schema: &DatasetSchema,
    provider: &dyn EmbeddingProvider,
    opts: &BuildOptions,
) -> Result<ProcessedDataset<T>, PreprocessError> {
    for record in &records {
        record.check_keys(schema)?;
    }
    let dim = provider.dimension();

    // numerics: parse everything first, then fit per field
    let mut parsed: Vec<Vec<Option<T>>> = vec![Vec::new(); schema.fields.len()];
    for (fi, field) in schema.fields.iter().enumerate() {
        if field.kind != FieldKind::Numeric {
            continue;
        }
        for record in &records {
            let value = match record.get(&field.name) {
                Some(raw) if !raw.trim().is_empty() => {
                    Some(parse_numeric::<T>(raw).ok_or_else(|| PreprocessError::NonNumericValue {
                        field: field.name.clone(),
                        id: record.id,
                    })?)
                }
                _ => None,
            };
            parsed[fi].push(value);
        }
    }
    let scalers: Vec<Option<ScalerStats<T>>> = schema
        .fields
        .iter()
        .enumerate()
        .map(|(fi, field)| {
            (field.kind == FieldKind::Numeric).then(|| {
                let present: Vec<T> = parsed[fi].iter().flatten().copied().collect();
                fit_numeric_scaler(&present)
            })
        })
        .collect();

    // categorical: one provider call over the distinct texts
    let mut distinct: Vec<String> = Vec::new();
    let mut slot: HashMap<String, usize> = HashMap::new();
    for field in schema.fields.iter().filter(|f| f.kind == FieldKind::Categorical) {
        for record in &records {
            if let Some(raw) = record.get(&field.name) {
                let text = prepare_text(raw, opts);
                if !text.is_empty() && !slot.contains_key(&text) {
                    slot.insert(text.clone(), distinct.len());
                    distinct.push(text);
                }
            }
        }
    }
    let embedded = if distinct.is_empty() {
        Vec::new()
    } else {
        provider.embed_batch(&distinct)?
    };
    if embedded.len() != distinct.len() {
        return Err(EmbedError::Count {
            expected: distinct.len(),
            got: embedded.len(),
        }
        .into());
    }
    let mut texts: Vec<TextValue<T>> = Vec::with_capacity(distinct.len());
    for (text, raw) in distinct.iter().zip(&embedded) {
        texts.push(TextValue {
            vector: normalize_embedding::<T>(raw, dim)?.into(),
            text: text.as_str().into(),
        });
    }

    let mut processed = Vec::with_capacity(records.len());
    for (ri, record) in records.iter().enumerate() {
        let mut values = Vec::with_capacity(schema.fields.len());
        for (fi, field) in schema.fields.iter().enumerate() {
            let value = match field.kind {
                FieldKind::Numeric => match parsed[fi][ri] {
                    Some(x) => FieldValue::Number(scale_numeric(scalers[fi].as_ref().unwrap(), x)?),
                    None => FieldValue::Missing,
                },
                FieldKind::Boolean => match record.get(&field.name).map(parse_boolean) {
                    Some(Ok(Some(b))) => FieldValue::Flag(b),
                    Some(Ok(None)) | None => FieldValue::Missing,
                    Some(Err(_)) => {
                        return Err(PreprocessError::UnrecognizedBooleanField {
                            field: field.name.clone(),
                            id: record.id,
                        })
                    }
                },
                FieldKind::Categorical => match record.get(&field.name) {
                    Some(raw) => {
                        let text = prepare_text(raw, opts);
                        match slot.get(&text) {
                            Some(&i) => FieldValue::Text(texts[i].clone()),
                            None => FieldValue::Missing,
                        }
                    }
                    None => FieldValue::Missing,
                },
            };
            if value.is_missing() && !field.allow_missing {
                return Err(PreprocessError::MissingValue {
                    field: field.name.clone(),
                    id: record.id,
                });
            }
            values.push(value);
        }
        processed.push(ProcessedRecord {
            id: record.id,
            values,
        });
    }
    Ok(ProcessedDataset::from_parts(
        schema.clone(),
        processed,
        scalers,
        dim,
        records,
    )?)
}
