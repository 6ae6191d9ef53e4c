use std::collections::BTreeMap;

use crate::error::{Error, Result};

fn pairs(n: u64) -> f64 {
    (n * n.saturating_sub(1) / 2) as f64
}

/// Adjusted Rand index between two labelings of the same items. Returns 1
/// when both labelings are trivially identical partitions (the index is
/// otherwise undefined there).
pub fn adjusted_rand_index<A: Ord, B: Ord>(a: &[A], b: &[B]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!("labelings of length {} and {}", a.len(), b.len())));
    }
    let mut table: BTreeMap<(&A, &B), u64> = BTreeMap::new();
    let mut rows: BTreeMap<&A, u64> = BTreeMap::new();
    let mut cols: BTreeMap<&B, u64> = BTreeMap::new();
    for (x, y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&n| pairs(n)).sum();
    let sa: f64 = rows.values().map(|&n| pairs(n)).sum();
    let sb: f64 = cols.values().map(|&n| pairs(n)).sum();
    let total = pairs(a.len() as u64);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = sa * sb / total;
    let max = (sa + sb) / 2.0;
    if max == expected {
        return Ok(if index == expected { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / (max - expected))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(a: &[u8], b: &[u8]) -> f64 {
        let n = a.len();
        let (mut both, mut only_a, mut only_b, mut all) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            for j in i + 1..n {
                let sa = a[i] == a[j];
                let sb = b[i] == b[j];
                all += 1.0;
                both += (sa && sb) as u8 as f64;
                only_a += sa as u8 as f64;
                only_b += sb as u8 as f64;
            }
        }
        let expected = only_a * only_b / all;
        let max = (only_a + only_b) / 2.0;
        (both - expected) / (max - expected)
    }

    #[test]
    fn known_values() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[5, 5, 2, 2]).unwrap(), 1.0);
        let v = adjusted_rand_index(&[0, 0, 0, 1, 1, 1], &[0, 0, 1, 1, 2, 2]).unwrap();
        assert!((v - 0.24242424242424243).abs() < 1e-12, "{v}");
        assert!(adjusted_rand_index(&[0, 1], &[0]).is_err());
    }

    proptest! {
        #[test]
        fn matches_pair_counting(a in proptest::collection::vec(0u8..4, 3..20), seed in 0u8..4) {
            let b: Vec<u8> = a.iter().enumerate().map(|(i, x)| (x + (i as u8 % (seed + 1))) % 3).collect();
            let got = adjusted_rand_index(&a, &b).unwrap();
            let want = brute(&a, &b);
            if want.is_finite() {
                prop_assert!((got - want).abs() < 1e-12);
            }
            prop_assert!((adjusted_rand_index(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        }
    }
}
