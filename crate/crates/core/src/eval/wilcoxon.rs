use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::EvalError;

/// Largest number of non-zero differences for which `Auto` uses the exact
/// null distribution.
pub const EXACT_MAX_N: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WilcoxonMethod {
    /// Exact for `n <= EXACT_MAX_N`, normal approximation above.
    Auto,
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// `min(W+, W-)`.
    pub statistic: f64,
    pub p_value: f64,
    /// Number of non-zero differences.
    pub n: usize,
    pub method: WilcoxonMethod,
}

/// Two-sided Wilcoxon signed-rank test on paired samples.
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64]) -> Result<WilcoxonResult, EvalError> {
    wilcoxon_signed_rank_with(x, y, WilcoxonMethod::Auto)
}

pub fn wilcoxon_signed_rank_with(x: &[f64], y: &[f64], method: WilcoxonMethod) -> Result<WilcoxonResult, EvalError> {
    if x.len() != y.len() {
        return Err(EvalError::LengthMismatch(x.len(), y.len()));
    }
    if x.is_empty() {
        return Err(EvalError::EmptySample);
    }
    let diffs: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).filter(|d| *d != 0.0).collect();
    if diffs.is_empty() {
        return Err(EvalError::AllZeroDifferences);
    }
    let n = diffs.len();

    // average ranks of |d|, kept doubled so they stay integral
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| diffs[a].abs().total_cmp(&diffs[b].abs()));
    let mut doubled = vec![0u64; n];
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && diffs[order[j + 1]].abs() == diffs[order[i]].abs() {
            j += 1;
        }
        // ranks i+1..=j+1 averaged, doubled: (i+1 + j+1)
        let r2 = (i + j + 2) as u64;
        for &o in &order[i..=j] {
            doubled[o] = r2;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let w_plus2: u64 = diffs.iter().zip(&doubled).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let total2: u64 = doubled.iter().sum();
    let w2 = w_plus2.min(total2 - w_plus2);
    let statistic = w2 as f64 / 2.0;

    let method = match method {
        WilcoxonMethod::Auto if n <= EXACT_MAX_N => WilcoxonMethod::Exact,
        WilcoxonMethod::Auto => WilcoxonMethod::Normal,
        m => m,
    };
    let p_value = match method {
        WilcoxonMethod::Exact => exact_p(&doubled, w2),
        _ => normal_p(n, statistic, tie_term),
    };
    Ok(WilcoxonResult {
        statistic,
        p_value,
        n,
        method,
    })
}

/// `2 * P(W+ <= w)` under the null where each sign is a fair coin, counting
/// every sign assignment via a distribution over doubled rank sums.
fn exact_p(doubled: &[u64], w2: u64) -> f64 {
    let total2: u64 = doubled.iter().sum();
    let mut dist = vec![0.0f64; total2 as usize + 1];
    dist[0] = 1.0;
    let mut reach = 0usize;
    for &r in doubled {
        let r = r as usize;
        for s in (0..=reach).rev() {
            let p = dist[s];
            if p != 0.0 {
                dist[s + r] += p * 0.5;
                dist[s] = p * 0.5;
            }
        }
        reach += r;
    }
    let tail: f64 = dist[..=w2 as usize].iter().sum();
    (2.0 * tail).min(1.0)
}

/// Normal approximation with tie and continuity corrections.
fn normal_p(n: usize, w: f64, tie_term: f64) -> f64 {
    let n = n as f64;
    let mean = n * (n + 1.0) / 4.0;
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((w - mean).abs() - 0.5).max(0.0) / var.sqrt();
    erfc(z / std::f64::consts::SQRT_2).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute force: enumerate every sign pattern over the given doubled ranks.
    fn enumerate_p(doubled: &[u64], w2: u64) -> f64 {
        let n = doubled.len();
        let mut at_most = 0u64;
        for mask in 0u64..(1 << n) {
            let s: u64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| doubled[i]).sum();
            if s <= w2 {
                at_most += 1;
            }
        }
        (2.0 * at_most as f64 / (1u64 << n) as f64).min(1.0)
    }

    #[test]
    fn all_positive_five() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let r = wilcoxon_signed_rank(&x, &[0.0; 5]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 0.0625);
        assert_eq!(r.p_value, enumerate_p(&[2, 4, 6, 8, 10], 0));
        assert_eq!(r.method, WilcoxonMethod::Exact);
    }

    #[test]
    fn tied_pair() {
        let r = wilcoxon_signed_rank(&[1.0, -1.0], &[0.0, 0.0]).unwrap();
        assert_eq!(r.statistic, 1.5);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn zeros_dropped_and_errors() {
        let r = wilcoxon_signed_rank(&[1.0, 2.0, 5.0], &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(r.n, 2);
        assert_eq!(
            wilcoxon_signed_rank(&[1.0, 2.0], &[1.0, 2.0]),
            Err(EvalError::AllZeroDifferences)
        );
        assert_eq!(wilcoxon_signed_rank(&[1.0], &[]), Err(EvalError::LengthMismatch(1, 0)));
    }

    #[test]
    fn dp_matches_enumeration_with_ties() {
        let x = [0.5, -0.5, 1.0, 2.0, -2.0, 2.0, 3.5, -0.25, 0.25, 4.0];
        let r = wilcoxon_signed_rank_with(&x, &[0.0; 10], WilcoxonMethod::Exact).unwrap();
        // doubled average ranks of |x|
        let abs: Vec<f64> = x.iter().map(|v: &f64| v.abs()).collect();
        let doubled: Vec<u64> = abs
            .iter()
            .map(|a| {
                let less = abs.iter().filter(|b| *b < a).count() as u64;
                let eq = abs.iter().filter(|b| *b == a).count() as u64;
                2 * less + eq + 1
            })
            .collect();
        let plus: u64 = x.iter().zip(&doubled).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
        let total: u64 = doubled.iter().sum();
        let w2 = plus.min(total - plus);
        assert_eq!(r.statistic, w2 as f64 / 2.0);
        assert!((r.p_value - enumerate_p(&doubled, w2)).abs() < 1e-15);
    }

    #[test]
    fn normal_large_n_symmetric() {
        let x: Vec<f64> = (1..=30).map(|v| if v % 2 == 0 { v as f64 } else { -(v as f64) }).collect();
        let r = wilcoxon_signed_rank(&x, &vec![0.0; 30]).unwrap();
        assert_eq!(r.method, WilcoxonMethod::Normal);
        assert!(r.p_value > 0.5);
    }
}
