//! Seeded synthetic mixed-type datasets and queries, for property tests and
//! benchmarks.

use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::dataset::{FieldValue, ProcessedDataset, ProcessedRecord, TextValue};
use crate::metric::QueryPoint;
use crate::scalar::Scalar;
use crate::schema::{DatasetSchema, FieldKind, FieldSpec};

/// Shape of a generated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub numeric: usize,
    pub boolean: usize,
    pub categorical: usize,
    pub embed_dim: usize,
    /// Probability that any single value is missing.
    pub missing_rate: f64,
    /// Distinct texts per categorical field.
    pub vocabulary: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            numeric: 2,
            boolean: 1,
            categorical: 2,
            embed_dim: 16,
            missing_rate: 0.1,
            vocabulary: 12,
        }
    }
}

impl SynthSpec {
    pub fn schema(&self) -> DatasetSchema {
        let mut fields = Vec::new();
        for i in 0..self.numeric {
            fields.push(FieldSpec::new(format!("num{i}"), FieldKind::Numeric));
        }
        for i in 0..self.boolean {
            fields.push(FieldSpec::new(format!("flag{i}"), FieldKind::Boolean));
        }
        for i in 0..self.categorical {
            fields.push(FieldSpec::new(format!("cat{i}"), FieldKind::Categorical));
        }
        DatasetSchema::new(fields)
    }
}

/// Random unit vector rounded to `f32` precision, like stored embeddings.
pub fn random_unit<T: Scalar, R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<T> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-3 {
            return v.iter().map(|x| T::of((x / norm) as f32 as f64)).collect();
        }
    }
}

fn vocabulary<T: Scalar, R: Rng + ?Sized>(rng: &mut R, spec: &SynthSpec, field: usize) -> Vec<TextValue<T>> {
    (0..spec.vocabulary.max(1))
        .map(|i| TextValue {
            vector: Arc::from(random_unit::<T, _>(rng, spec.embed_dim)),
            text: Arc::from(format!("cat{field}-term{i}")),
        })
        .collect()
}

/// Scaled numeric value: mostly within a few units, sometimes on a coarse
/// grid (ties) and sometimes past the distance cap.
fn numeric<T: Scalar, R: Rng + ?Sized>(rng: &mut R) -> T {
    let x: f64 = match rng.random_range(0..10) {
        0 => rng.random_range(-12.0..12.0),
        1 | 2 => (rng.random_range(-6.0f64..6.0) * 2.0).round() / 2.0,
        _ => (0..3).map(|_| rng.random_range(-1.0..1.0)).sum::<f64>() * 1.5,
    };
    T::of(x)
}

/// Uniform mixed-type records with ids `0..n`.
pub fn random_dataset<T: Scalar, R: Rng + ?Sized>(rng: &mut R, spec: &SynthSpec, n: usize) -> ProcessedDataset<T> {
    let schema = spec.schema();
    let vocabs: Vec<Vec<TextValue<T>>> = (0..spec.categorical).map(|f| vocabulary(rng, spec, f)).collect();
    let records = (0..n)
        .map(|id| {
            let values = schema
                .fields
                .iter()
                .enumerate()
                .map(|(i, f)| {
                    if rng.random_bool(spec.missing_rate) {
                        return FieldValue::Missing;
                    }
                    match f.kind {
                        FieldKind::Numeric => FieldValue::Number(numeric(rng)),
                        FieldKind::Boolean => FieldValue::Flag(rng.random_bool(0.5)),
                        FieldKind::Categorical => {
                            let c = i - spec.numeric - spec.boolean;
                            FieldValue::Text(vocabs[c].choose(rng).unwrap().clone())
                        }
                    }
                })
                .collect();
            ProcessedRecord { id: id as u64, values }
        })
        .collect();
    ProcessedDataset::from_records(schema, records, spec.embed_dim).expect("generated records fit schema")
}

/// Records drawn around `clusters` prototypes: numerics jittered, flags and
/// texts mostly inherited from the prototype.
pub fn clustered_dataset<T: Scalar, R: Rng + ?Sized>(
    rng: &mut R,
    spec: &SynthSpec,
    n: usize,
    clusters: usize,
) -> ProcessedDataset<T> {
    let schema = spec.schema();
    let vocabs: Vec<Vec<TextValue<T>>> = (0..spec.categorical).map(|f| vocabulary(rng, spec, f)).collect();
    let prototypes: Vec<Vec<FieldValue<T>>> = (0..clusters.max(1))
        .map(|_| {
            schema
                .fields
                .iter()
                .enumerate()
                .map(|(i, f)| match f.kind {
                    FieldKind::Numeric => FieldValue::Number(T::of(rng.random_range(-3.0..3.0))),
                    FieldKind::Boolean => FieldValue::Flag(rng.random_bool(0.5)),
                    FieldKind::Categorical => {
                        let c = i - spec.numeric - spec.boolean;
                        FieldValue::Text(vocabs[c].choose(rng).unwrap().clone())
                    }
                })
                .collect()
        })
        .collect();
    let records = (0..n)
        .map(|id| {
            let proto = prototypes.choose(rng).unwrap();
            let values = schema
                .fields
                .iter()
                .enumerate()
                .map(|(i, f)| {
                    if rng.random_bool(spec.missing_rate) {
                        return FieldValue::Missing;
                    }
                    match (&proto[i], f.kind) {
                        (FieldValue::Number(x), _) => FieldValue::Number(*x + T::of(rng.random_range(-0.05..0.05))),
                        (FieldValue::Flag(b), _) => FieldValue::Flag(if rng.random_bool(0.05) { !b } else { *b }),
                        (v, FieldKind::Categorical) if rng.random_bool(0.9) => v.clone(),
                        (_, FieldKind::Categorical) => {
                            let c = i - spec.numeric - spec.boolean;
                            FieldValue::Text(vocabs[c].choose(rng).unwrap().clone())
                        }
                        (v, _) => v.clone(),
                    }
                })
                .collect();
            ProcessedRecord { id: id as u64, values }
        })
        .collect();
    ProcessedDataset::from_records(schema, records, spec.embed_dim).expect("generated records fit schema")
}

/// Random non-empty field subset with weights drawn from `weights`. Values
/// are copied from a random record (possibly missing) or freshly drawn.
pub fn random_query<T: Scalar, R: Rng + ?Sized>(
    rng: &mut R,
    dataset: &ProcessedDataset<T>,
    weights: &[f64],
) -> QueryPoint<T> {
    let schema = dataset.schema();
    let source = &dataset.records()[rng.random_range(0..dataset.len())];
    loop {
        let mut terms = Vec::new();
        for (i, f) in schema.fields.iter().enumerate() {
            if !rng.random_bool(0.5) {
                continue;
            }
            let value = if rng.random_bool(0.6) {
                source.values[i].clone()
            } else {
                match f.kind {
                    FieldKind::Numeric => FieldValue::Number(numeric(rng)),
                    FieldKind::Boolean => FieldValue::Flag(rng.random_bool(0.5)),
                    FieldKind::Categorical => FieldValue::text(random_unit(rng, dataset.embed_dim()), "query"),
                }
            };
            let w = *weights.choose(rng).unwrap_or(&1.0);
            terms.push((f.name.clone(), value, T::of(w)));
        }
        if !terms.is_empty() {
            return QueryPoint::new(schema, terms).expect("generated query fits schema");
        }
    }
}
