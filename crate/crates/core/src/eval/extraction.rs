use std::collections::HashMap;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::query::{QueryValue, StructuredQuery};

/// Attribute-level confusion counts for one or more extractions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        f1(self.precision(), self.recall())
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Add for ConfusionCounts {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        ConfusionCounts {
            tp: self.tp + rhs.tp,
            fp: self.fp + rhs.fp,
            fn_: self.fn_ + rhs.fn_,
        }
    }
}

impl AddAssign for ConfusionCounts {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

/// Harmonic mean; 0 when both inputs are 0.
pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn as_number(v: &QueryValue) -> Option<f64> {
    match v {
        QueryValue::Number(n) => Some(*n),
        QueryValue::Text(t) => t.trim().parse().ok(),
        QueryValue::Bool(_) => None,
    }
}

/// Numbers agree within 1e-6 relative; everything else compares as trimmed,
/// case-folded text.
pub fn values_match(truth: &QueryValue, predicted: &QueryValue) -> bool {
    if matches!(truth, QueryValue::Number(_)) || matches!(predicted, QueryValue::Number(_)) {
        if let (Some(a), Some(b)) = (as_number(truth), as_number(predicted)) {
            return (a - b).abs() <= 1e-6 * a.abs().max(b.abs());
        }
    }
    truth.to_string().trim().to_lowercase() == predicted.to_string().trim().to_lowercase()
}

/// A key in both with an equal value is a true positive. A wrong value is
/// both a false positive and a false negative.
pub fn extraction_confusion(truth: &StructuredQuery, predicted: &StructuredQuery) -> ConfusionCounts {
    let truth: HashMap<String, &QueryValue> = truth.values.iter().map(|(k, v)| (k.to_lowercase(), v)).collect();
    let mut counts = ConfusionCounts::default();
    let mut matched = 0;
    for (key, value) in &predicted.values {
        match truth.get(&key.to_lowercase()) {
            Some(t) => {
                matched += 1;
                if values_match(t, value) {
                    counts.tp += 1;
                } else {
                    counts.fp += 1;
                    counts.fn_ += 1;
                }
            }
            None => counts.fp += 1,
        }
    }
    counts.fn_ += truth.len() - matched;
    counts
}
