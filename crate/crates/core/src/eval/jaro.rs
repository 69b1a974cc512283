/// Jaro similarity over Unicode scalar values.
///
/// Characters match when equal and no further apart than
/// `max(|a|, |b|) / 2 - 1`; `t` is half the number of matched characters
/// that appear in a different order.
pub fn jaro(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let window = (a.len().max(b.len()) / 2).saturating_sub(1);
    let mut b_used = vec![false; b.len()];
    let mut a_matched = Vec::new();
    for (i, &ca) in a.iter().enumerate() {
        let lo = i.saturating_sub(window);
        let hi = (i + window + 1).min(b.len());
        for j in lo..hi {
            if !b_used[j] && b[j] == ca {
                b_used[j] = true;
                a_matched.push(ca);
                break;
            }
        }
    }
    let m = a_matched.len();
    if m == 0 {
        return 0.0;
    }
    let b_matched = b.iter().zip(&b_used).filter(|(_, u)| **u).map(|(c, _)| *c);
    let half_transpositions = a_matched.iter().zip(b_matched).filter(|(x, y)| **x != *y).count();
    let t = half_transpositions as f64 / 2.0;
    let m = m as f64;
    (m / a.len() as f64 + m / b.len() as f64 + (m - t) / m) / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(jaro("abc", "abc"), 1.0);
        assert!((jaro("MARTHA", "MARHTA") - 17.0 / 18.0).abs() < 1e-9);
        assert_eq!(jaro("", "x"), 0.0);
        assert_eq!(jaro("", ""), 1.0);
        assert_eq!(jaro("abc", "xyz"), 0.0);
    }

    #[test]
    fn textbook_values() {
        // DIXON/DICKSONX: m=4, t=0 -> (4/5 + 4/8 + 1)/3
        assert!((jaro("DIXON", "DICKSONX") - (0.8 + 0.5 + 1.0) / 3.0).abs() < 1e-12);
        // DWAYNE/DUANE: m=4, t=0 -> (4/6 + 4/5 + 1)/3
        assert!((jaro("DWAYNE", "DUANE") - (4.0 / 6.0 + 0.8 + 1.0) / 3.0).abs() < 1e-12);
    }
}
