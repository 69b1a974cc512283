//! Mixed-type distance.
//!
//! Per-field distances are bounded metrics: numeric `min(|a - b|, 6)` in
//! scaled units, boolean 0/1, categorical the chord length `|u - v|`
//! between unit embeddings (equal to `sqrt(2 - 2 cos)`, capped at 2). A
//! missing value on exactly one side costs half the field's cap; two
//! missing values cost nothing. With those penalties every per-field
//! distance is still a metric, and the weighted L2 combination
//! `sqrt(sum w_f d_f^2)` is too, which is what ball-tree pruning relies on.

use std::collections::HashSet;

use thiserror::Error;

use crate::dataset::{FieldValue, ProcessedRecord, TextValue};
use crate::scalar::Scalar;
use crate::schema::{DatasetSchema, FieldKind};

pub const NUMERIC_CAP: f64 = 6.0;
pub const BOOLEAN_CAP: f64 = 1.0;
pub const CATEGORICAL_CAP: f64 = 2.0;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("value does not match field kind {0:?}")]
    KindMismatch(FieldKind),
    #[error("unknown field `{0}`")]
    UnknownField(String),
    #[error("field `{0}` appears twice in the query")]
    DuplicateField(String),
    #[error("weight for `{0}` must be finite and positive")]
    InvalidWeight(String),
    #[error("query has no fields")]
    EmptyQuery,
    #[error("embedding for `{field}` has dimension {got}, index uses {expected}")]
    Dimension {
        field: String,
        expected: usize,
        got: usize,
    },
}

pub fn distance_cap(kind: FieldKind) -> f64 {
    match kind {
        FieldKind::Numeric => NUMERIC_CAP,
        FieldKind::Boolean => BOOLEAN_CAP,
        FieldKind::Categorical => CATEGORICAL_CAP,
    }
}

/// Distance charged when exactly one side is missing.
pub fn missing_penalty(kind: FieldKind) -> f64 {
    distance_cap(kind) / 2.0
}

pub fn field_distance<T: Scalar>(
    kind: FieldKind,
    a: &FieldValue<T>,
    b: &FieldValue<T>,
) -> Result<T, MetricError> {
    if !a.fits(kind) || !b.fits(kind) {
        return Err(MetricError::KindMismatch(kind));
    }
    if let (FieldValue::Text(u), FieldValue::Text(v)) = (a, b) {
        if u.vector.len() != v.vector.len() {
            return Err(MetricError::KindMismatch(kind));
        }
    }
    Ok(raw_field_distance(kind, a, b))
}

/// [`field_distance`] without the kind check; callers guarantee both values
/// fit `kind`.
#[inline]
pub(crate) fn raw_field_distance<T: Scalar>(kind: FieldKind, a: &FieldValue<T>, b: &FieldValue<T>) -> T {
    match (a, b) {
        (FieldValue::Missing, FieldValue::Missing) => T::zero(),
        (FieldValue::Missing, _) | (_, FieldValue::Missing) => T::of(missing_penalty(kind)),
        (FieldValue::Number(x), FieldValue::Number(y)) => (*x - *y).abs().min(T::of(NUMERIC_CAP)),
        (FieldValue::Flag(x), FieldValue::Flag(y)) => {
            if x == y {
                T::zero()
            } else {
                T::one()
            }
        }
        (FieldValue::Text(u), FieldValue::Text(v)) => chord(u, v),
        _ => T::of(distance_cap(kind)),
    }
}

#[inline]
fn chord<T: Scalar>(u: &TextValue<T>, v: &TextValue<T>) -> T {
    if std::sync::Arc::ptr_eq(&u.vector, &v.vector) {
        return T::zero();
    }
    let sq = u
        .vector
        .iter()
        .zip(v.vector.iter())
        .fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y));
    sq.sqrt().min(T::of(CATEGORICAL_CAP))
}

/// One queried field.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryTerm<T> {
    pub field: usize,
    pub name: String,
    pub kind: FieldKind,
    pub value: FieldValue<T>,
    pub weight: T,
}

/// A query in the processed feature space: a subset of fields, each with a
/// target value and a positive weight.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryPoint<T> {
    terms: Vec<QueryTerm<T>>,
    max_weight: T,
}

impl<T: Scalar> QueryPoint<T> {
    pub fn new<S: AsRef<str>>(
        schema: &DatasetSchema,
        terms: impl IntoIterator<Item = (S, FieldValue<T>, T)>,
    ) -> Result<Self, MetricError> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for (name, value, weight) in terms {
            let name = name.as_ref();
            let field = schema
                .field_index(name)
                .ok_or_else(|| MetricError::UnknownField(name.to_string()))?;
            if !seen.insert(field) {
                return Err(MetricError::DuplicateField(name.to_string()));
            }
            if !(weight.is_finite() && weight > T::zero()) {
                return Err(MetricError::InvalidWeight(name.to_string()));
            }
            let kind = schema.fields[field].kind;
            if !value.fits(kind) {
                return Err(MetricError::KindMismatch(kind));
            }
            out.push(QueryTerm {
                field,
                name: name.to_string(),
                kind,
                value,
                weight,
            });
        }
        if out.is_empty() {
            return Err(MetricError::EmptyQuery);
        }
        let max_weight = out.iter().map(|t| t.weight).fold(T::zero(), T::max);
        Ok(QueryPoint {
            terms: out,
            max_weight,
        })
    }

    /// Query built from a whole record: every field at weight 1.
    pub fn from_record(schema: &DatasetSchema, record: &ProcessedRecord<T>) -> Self {
        let terms = schema
            .fields
            .iter()
            .enumerate()
            .map(|(i, f)| QueryTerm {
                field: i,
                name: f.name.clone(),
                kind: f.kind,
                value: record.values[i].clone(),
                weight: T::one(),
            })
            .collect();
        QueryPoint {
            terms,
            max_weight: T::one(),
        }
    }

    pub fn terms(&self) -> &[QueryTerm<T>] {
        &self.terms
    }

    pub fn max_weight(&self) -> T {
        self.max_weight
    }

    /// Checks embedding dimensions against an index.
    pub fn check_dimension(&self, embed_dim: usize) -> Result<(), MetricError> {
        for term in &self.terms {
            if let FieldValue::Text(t) = &term.value {
                if t.vector.len() != embed_dim {
                    return Err(MetricError::Dimension {
                        field: term.name.clone(),
                        expected: embed_dim,
                        got: t.vector.len(),
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldContribution<T> {
    pub field: String,
    /// Unweighted per-field distance.
    pub distance: T,
    pub weight: T,
    /// `weight * distance^2`.
    pub contribution: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceBreakdown<T> {
    pub total: T,
    pub per_field: Vec<FieldContribution<T>>,
}

/// Weighted distance with a per-field account of where it came from.
pub fn combined_distance<T: Scalar>(query: &QueryPoint<T>, record: &ProcessedRecord<T>) -> DistanceBreakdown<T> {
    let mut acc = T::zero();
    let mut per_field = Vec::with_capacity(query.terms.len());
    for term in &query.terms {
        let d = raw_field_distance(term.kind, &term.value, &record.values[term.field]);
        let contribution = term.weight * d * d;
        acc = acc + contribution;
        per_field.push(FieldContribution {
            field: term.name.clone(),
            distance: d,
            weight: term.weight,
            contribution,
        });
    }
    DistanceBreakdown {
        total: acc.sqrt(),
        per_field,
    }
}

/// Same value as `combined_distance(..).total`, bit for bit.
#[inline]
pub fn weighted_distance<T: Scalar>(query: &QueryPoint<T>, record: &ProcessedRecord<T>) -> T {
    let mut acc = T::zero();
    for term in &query.terms {
        let d = raw_field_distance(term.kind, &term.value, &record.values[term.field]);
        acc = acc + term.weight * d * d;
    }
    acc.sqrt()
}

/// All fields at unit weight; the metric tree radii are measured in.
#[inline]
pub fn reference_distance<T: Scalar>(
    schema: &DatasetSchema,
    a: &ProcessedRecord<T>,
    b: &ProcessedRecord<T>,
) -> T {
    let mut acc = T::zero();
    for (i, field) in schema.fields.iter().enumerate() {
        let d = raw_field_distance(field.kind, &a.values[i], &b.values[i]);
        acc = acc + d * d;
    }
    acc.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::FieldSpec;

    fn unit(dim: usize, axis: usize) -> FieldValue<f64> {
        let mut v = vec![0.0; dim];
        v[axis] = 1.0;
        FieldValue::text(v, "t")
    }

    #[test]
    fn boolean_identical_is_zero() {
        let d = field_distance(FieldKind::Boolean, &FieldValue::<f64>::Flag(true), &FieldValue::Flag(true));
        assert_eq!(d, Ok(0.0));
        let d = field_distance(FieldKind::Boolean, &FieldValue::<f64>::Flag(true), &FieldValue::Flag(false));
        assert_eq!(d, Ok(1.0));
    }

    #[test]
    fn categorical_identical_and_orthogonal() {
        let a = unit(4, 0);
        assert_eq!(field_distance(FieldKind::Categorical, &a, &a.clone()), Ok(0.0));
        // separately allocated but equal vectors
        assert_eq!(field_distance(FieldKind::Categorical, &a, &unit(4, 0)), Ok(0.0));
        let d = field_distance(FieldKind::Categorical, &a, &unit(4, 1)).unwrap();
        assert!((d - 1.41421).abs() < 1e-5);
        // matches sqrt(2 - 2 cos) for non-trivial unit vectors
        let s = 0.5f64.sqrt();
        let b = FieldValue::text(vec![s, s, 0.0, 0.0], "u");
        let d = field_distance(FieldKind::Categorical, &a, &b).unwrap();
        assert!((d - (2.0 - 2.0 * s).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn numeric_cap_and_missing_penalties() {
        let d = field_distance(FieldKind::Numeric, &FieldValue::Number(0.0), &FieldValue::Number(9.0));
        assert_eq!(d, Ok(6.0));
        let d = field_distance(FieldKind::Numeric, &FieldValue::Number(1.0), &FieldValue::Missing);
        assert_eq!(d, Ok(3.0));
        let d = field_distance::<f64>(FieldKind::Boolean, &FieldValue::Missing, &FieldValue::Flag(true));
        assert_eq!(d, Ok(0.5));
        assert_eq!(field_distance(FieldKind::Categorical, &FieldValue::Missing, &unit(4, 2)), Ok(1.0));
        assert_eq!(
            field_distance::<f64>(FieldKind::Categorical, &FieldValue::Missing, &FieldValue::Missing),
            Ok(0.0)
        );
    }

    #[test]
    fn kind_mismatch() {
        assert_eq!(
            field_distance(FieldKind::Numeric, &FieldValue::<f64>::Flag(true), &FieldValue::Number(1.0)),
            Err(MetricError::KindMismatch(FieldKind::Numeric))
        );
    }

    fn two_numeric() -> DatasetSchema {
        DatasetSchema::new(vec![
            FieldSpec::new("a", FieldKind::Numeric),
            FieldSpec::new("b", FieldKind::Numeric),
        ])
    }

    fn rec(a: f64, b: f64) -> ProcessedRecord<f64> {
        ProcessedRecord {
            id: 0,
            values: vec![FieldValue::Number(a), FieldValue::Number(b)],
        }
    }

    #[test]
    fn combined_examples() {
        let schema = two_numeric();
        let q = QueryPoint::new(&schema, [("a", FieldValue::Number(0.0), 1.0)]).unwrap();
        assert_eq!(combined_distance(&q, &rec(1.5, 100.0)).total, 1.5);

        let q = QueryPoint::new(
            &schema,
            [("a", FieldValue::Number(0.0), 1.0), ("b", FieldValue::Number(0.0), 1.0)],
        )
        .unwrap();
        let bd = combined_distance(&q, &rec(3.0, 4.0));
        assert_eq!(bd.total, 5.0);
        assert_eq!(bd.per_field.len(), 2);
        assert_eq!(bd.per_field[1].contribution, 16.0);
        assert_eq!(weighted_distance(&q, &rec(3.0, 4.0)), bd.total);

        assert_eq!(combined_distance(&q, &rec(0.0, 0.0)).total, 0.0);
    }

    #[test]
    fn query_validation() {
        let schema = two_numeric();
        assert_eq!(
            QueryPoint::new(&schema, [("zz", FieldValue::Number(0.0), 1.0)]).unwrap_err(),
            MetricError::UnknownField("zz".into())
        );
        assert_eq!(
            QueryPoint::new(&schema, [("a", FieldValue::Number(0.0), 0.0)]).unwrap_err(),
            MetricError::InvalidWeight("a".into())
        );
        assert_eq!(
            QueryPoint::new(
                &schema,
                [("a", FieldValue::Number(0.0), 1.0), ("a", FieldValue::Number(1.0), 1.0)]
            )
            .unwrap_err(),
            MetricError::DuplicateField("a".into())
        );
        assert_eq!(
            QueryPoint::<f64>::new::<&str>(&schema, []).unwrap_err(),
            MetricError::EmptyQuery
        );
        assert_eq!(
            QueryPoint::new(&schema, [("a", FieldValue::Flag(true), 1.0)]).unwrap_err(),
            MetricError::KindMismatch(FieldKind::Numeric)
        );
    }
}
