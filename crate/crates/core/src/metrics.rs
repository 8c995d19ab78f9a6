//! Ranking metrics over binary relevance.

use alloc::vec::Vec;

/// Fraction of (positive, negative) pairs ordered correctly; ties count half.
///
/// Returns `NaN` if either side is empty.
pub fn auc(pos: &[f64], neg: &[f64]) -> f64 {
    if pos.is_empty() || neg.is_empty() {
        return f64::NAN;
    }
    let mut sorted: Vec<f64> = neg.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let mut wins = 0.0;
    for &p in pos {
        let below = sorted.partition_point(|&n| n < p);
        let not_above = sorted.partition_point(|&n| n <= p);
        wins += below as f64 + 0.5 * (not_above - below) as f64;
    }
    wins / (pos.len() as f64 * neg.len() as f64)
}

/// `1 / log2(rank + 1)` for a 1-based rank.
#[inline]
pub fn gain(rank: usize) -> f64 {
    1.0 / libm::log2(rank as f64 + 1.0)
}

/// DCG of the top `k` flags over the ideal DCG of `min(total_relevant, k)`
/// relevant items.
pub fn ndcg_at_k(flags: &[bool], k: usize, total_relevant: usize) -> f64 {
    let ideal: f64 = (1..=total_relevant.min(k)).map(gain).sum();
    if ideal == 0.0 {
        return 0.0;
    }
    let dcg: f64 = flags
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, &f)| f)
        .map(|(i, _)| gain(i + 1))
        .sum();
    dcg / ideal
}

/// 1 if any of the first `k` flags is set.
pub fn hit_at_k(flags: &[bool], k: usize) -> f64 {
    if flags.iter().take(k).any(|&f| f) {
        1.0
    } else {
        0.0
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.9], &[0.1, 0.2]), 1.0);
        assert_eq!(auc(&[0.5], &[0.9, 0.1]), 0.5);
        assert_eq!(auc(&[0.5], &[0.5]), 0.5);
        assert!(auc(&[], &[1.0]).is_nan());
    }

    #[test]
    fn ndcg_examples() {
        assert_eq!(ndcg_at_k(&[true, false], 5, 1), 1.0);
        assert!((ndcg_at_k(&[false, false, true], 5, 1) - 0.5).abs() < 1e-15);
        assert_eq!(ndcg_at_k(&[false, false, false, true], 3, 1), 0.0);
        // two relevant, both at the top
        assert!((ndcg_at_k(&[true, true, false], 2, 5) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn hit_examples() {
        assert_eq!(hit_at_k(&[false, false, true], 3), 1.0);
        assert_eq!(hit_at_k(&[false, false, false, true], 3), 0.0);
        assert_eq!(mean(&[1.0, 0.0, 1.0, 1.0]), 0.75);
    }

    fn naive_auc(pos: &[f64], neg: &[f64]) -> f64 {
        let mut s = 0.0;
        for p in pos {
            for n in neg {
                s += if p > n { 1.0 } else if p == n { 0.5 } else { 0.0 };
            }
        }
        s / (pos.len() * neg.len()) as f64
    }

    proptest! {
        #[test]
        fn auc_matches_pairwise_and_monotone_transform(
            pos in proptest::collection::vec(-3i32..3, 1..20),
            neg in proptest::collection::vec(-3i32..3, 1..20),
        ) {
            let p: Vec<f64> = pos.iter().map(|&x| x as f64).collect();
            let n: Vec<f64> = neg.iter().map(|&x| x as f64).collect();
            let a = auc(&p, &n);
            prop_assert!((a - naive_auc(&p, &n)).abs() < 1e-12);
            let pt: Vec<f64> = p.iter().map(|x| libm::exp(*x) * 2.0 - 7.0).collect();
            let nt: Vec<f64> = n.iter().map(|x| libm::exp(*x) * 2.0 - 7.0).collect();
            prop_assert!((auc(&pt, &nt) - a).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&a));
        }

        #[test]
        fn ndcg_in_unit_interval(flags in proptest::collection::vec(any::<bool>(), 1..30), k in 1usize..30) {
            let rel = flags.iter().filter(|&&f| f).count();
            let v = ndcg_at_k(&flags, k, rel.max(1));
            prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
        }
    }
}
