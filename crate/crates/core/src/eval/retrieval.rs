use std::collections::HashSet;
use std::hash::Hash;

use super::EvalError;

fn hits_in_top<I: Eq + Hash>(retrieved: &[I], relevant: &HashSet<I>, k: usize) -> usize {
    retrieved.iter().take(k).filter(|id| relevant.contains(id)).count()
}

/// Fraction of the top `k` retrieved items that are relevant. When fewer
/// than `k` items were retrieved the denominator is the list length.
pub fn precision_at_k<I: Eq + Hash>(retrieved: &[I], relevant: &HashSet<I>, k: usize) -> f64 {
    let denom = k.min(retrieved.len());
    if denom == 0 {
        return 0.0;
    }
    hits_in_top(retrieved, relevant, k) as f64 / denom as f64
}

/// Fraction of all relevant items found in the top `k`.
pub fn recall_at_k<I: Eq + Hash>(retrieved: &[I], relevant: &HashSet<I>, k: usize) -> Result<f64, EvalError> {
    if relevant.is_empty() {
        return Err(EvalError::EmptyRelevantSet);
    }
    Ok(hits_in_top(retrieved, relevant, k) as f64 / relevant.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(items: &[char]) -> HashSet<char> {
        items.iter().copied().collect()
    }

    #[test]
    fn precision_examples() {
        assert!((precision_at_k(&['a', 'b', 'c'], &set(&['a', 'c']), 3) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(precision_at_k(&['a', 'b'], &set(&['a', 'b', 'z']), 2), 1.0);
        assert_eq!(precision_at_k::<char>(&[], &set(&['a']), 5), 0.0);
        // short list: denominator is the list length
        assert_eq!(precision_at_k(&['a'], &set(&['a']), 5), 1.0);
    }

    #[test]
    fn recall_examples() {
        let got = recall_at_k(&['a', 'b', 'c', 'd', 'e'], &set(&['a', 'x', 'b', 'y']), 5).unwrap();
        assert_eq!(got, 0.5);
        assert_eq!(recall_at_k(&['a', 'b', 'q'], &set(&['a', 'b']), 3).unwrap(), 1.0);
        assert_eq!(recall_at_k(&['q'], &set(&['a']), 1).unwrap(), 0.0);
        assert_eq!(recall_at_k(&['q'], &set(&[]), 1), Err(EvalError::EmptyRelevantSet));
    }
}
