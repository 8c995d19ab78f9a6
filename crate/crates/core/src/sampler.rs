//! Frequency-shaped negative sampling.
//!
//! An index with corpus frequency `f(i) = count(i) / total` gets weight
//! `max(0, 1 - sqrt(floor / f(i)))`, with `floor = 1e-5` by default. Draws use
//! Vose's alias method, so each one costs a single uniform index and a single
//! uniform float.

use alloc::vec::Vec;

use rand::Rng;
use thiserror::Error;

pub const DEFAULT_FLOOR: f64 = 1e-5;
/// Rejections allowed per draw before giving up.
pub const MAX_RETRIES: usize = 100;

#[derive(Debug, Error, PartialEq)]
pub enum SamplerError {
    #[error("cannot build a sampling table from an empty or all-zero count vector")]
    EmptyCounts,
    #[error(
        "every frequency is at or below the floor {floor:e}, so all sampling weights are zero; \
         lower neg_sample_floor"
    )]
    AllWeightsZero { floor: f64 },
    #[error("the exclusion set covers the whole sampling support")]
    ExhaustedSupport,
    #[error("gave up after {MAX_RETRIES} rejected draws")]
    TooManyRejections,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplingTable {
    /// Normalized probabilities.
    probs: Vec<f64>,
    alias_prob: Vec<f64>,
    alias: Vec<u32>,
}

/// `max(0, 1 - sqrt(floor / f))`; zero for `f == 0`.
pub fn weight_for_frequency(f: f64, floor: f64) -> f64 {
    if f <= 0.0 {
        return 0.0;
    }
    (1.0 - libm::sqrt(floor / f)).max(0.0)
}

impl SamplingTable {
    /// Builds the table from raw counts with the default floor.
    pub fn from_counts(counts: &[u64]) -> Result<Self, SamplerError> {
        Self::from_counts_with_floor(counts, DEFAULT_FLOOR)
    }

    pub fn from_counts_with_floor(counts: &[u64], floor: f64) -> Result<Self, SamplerError> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(SamplerError::EmptyCounts);
        }
        let total = total as f64;
        let weights: Vec<f64> = counts
            .iter()
            .map(|&c| weight_for_frequency(c as f64 / total, floor))
            .collect();
        if weights.iter().all(|&w| w == 0.0) {
            return Err(SamplerError::AllWeightsZero { floor });
        }
        Ok(Self::from_weights(&weights))
    }

    /// Builds an alias table from non-negative weights with a positive sum.
    pub fn from_weights(weights: &[f64]) -> Self {
        let n = weights.len();
        let sum: f64 = weights.iter().sum();
        assert!(sum > 0.0 && sum.is_finite(), "weights must have a positive finite sum");
        let probs: Vec<f64> = weights.iter().map(|w| w / sum).collect();

        let mut scaled: Vec<f64> = probs.iter().map(|p| p * n as f64).collect();
        let mut alias_prob = alloc::vec![0.0; n];
        let mut alias = alloc::vec![0u32; n];
        let mut small = Vec::new();
        let mut large = Vec::new();
        for (i, &s) in scaled.iter().enumerate() {
            if s < 1.0 {
                small.push(i);
            } else {
                large.push(i);
            }
        }
        while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
            small.pop();
            alias_prob[s] = scaled[s];
            alias[s] = l as u32;
            scaled[l] = (scaled[l] + scaled[s]) - 1.0;
            if scaled[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        for i in large.into_iter().chain(small) {
            alias_prob[i] = 1.0;
            alias[i] = i as u32;
        }
        // Rounding can leave a zero-weight index holding its own column.
        let fallback = probs.iter().position(|&p| p > 0.0).unwrap() as u32;
        for i in 0..n {
            if probs[i] == 0.0 {
                alias_prob[i] = 0.0;
                if probs[alias[i] as usize] == 0.0 {
                    alias[i] = fallback;
                }
            }
        }
        Self {
            probs,
            alias_prob,
            alias,
        }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Normalized sampling probability of every index.
    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    /// One unrestricted draw.
    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let i = rng.gen_range(0..self.probs.len());
        let u: f64 = rng.gen();
        if u < self.alias_prob[i] {
            i as u32
        } else {
            self.alias[i]
        }
    }

    /// Appends `count` draws to `out`, resampling any index in `exclude`.
    pub fn draw_into<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        exclude: &[u32],
        count: usize,
        out: &mut Vec<u32>,
    ) -> Result<(), SamplerError> {
        if !exclude.is_empty() {
            let mut seen: Vec<u32> = exclude.to_vec();
            seen.sort_unstable();
            seen.dedup();
            let excluded_mass: f64 = seen
                .iter()
                .filter_map(|&i| self.probs.get(i as usize))
                .sum();
            if excluded_mass >= 1.0 - 1e-12 {
                return Err(SamplerError::ExhaustedSupport);
            }
        }
        for _ in 0..count {
            let mut tries = 0;
            loop {
                let d = self.sample(rng);
                if !exclude.contains(&d) {
                    out.push(d);
                    break;
                }
                tries += 1;
                if tries >= MAX_RETRIES {
                    return Err(SamplerError::TooManyRejections);
                }
            }
        }
        Ok(())
    }

    pub fn draw<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        exclude: &[u32],
        count: usize,
    ) -> Result<Vec<u32>, SamplerError> {
        let mut out = Vec::with_capacity(count);
        self.draw_into(rng, exclude, count, &mut out)?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_equal_items() {
        let t = SamplingTable::from_counts(&[100, 100]).unwrap();
        let w = weight_for_frequency(0.5, DEFAULT_FLOOR);
        assert!((w - 0.995_527_9).abs() < 1e-7);
        assert_eq!(t.probabilities(), &[0.5, 0.5]);
    }

    #[test]
    fn boundary_frequency_has_zero_weight() {
        assert_eq!(weight_for_frequency(1e-5, 1e-5), 0.0);
        assert_eq!(weight_for_frequency(4e-5, 1e-5), 0.5);
        assert_eq!(weight_for_frequency(1e-6, 1e-5), 0.0);
    }

    #[test]
    fn all_zero_weights_is_an_error() {
        // 200_000 items each with f = 5e-6
        let counts = alloc::vec![1u64; 200_000];
        assert!(matches!(
            SamplingTable::from_counts(&counts),
            Err(SamplerError::AllWeightsZero { .. })
        ));
        assert_eq!(SamplingTable::from_counts(&[0, 0]), Err(SamplerError::EmptyCounts));
    }

    #[test]
    fn exclusion_forces_support() {
        let t = SamplingTable::from_counts(&[100, 100]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = t.draw(&mut rng, &[0], 1000).unwrap();
        assert!(d.iter().all(|&i| i == 1));
        assert_eq!(t.draw(&mut rng, &[0, 1], 1), Err(SamplerError::ExhaustedSupport));
    }

    #[test]
    fn zero_weight_only_remainder_is_exhausted() {
        // item 2 has zero weight, excluding 0 and 1 leaves nothing
        let t = SamplingTable::from_weights(&[1.0, 1.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(t.draw(&mut rng, &[0, 1], 1), Err(SamplerError::ExhaustedSupport));
    }

    #[test]
    fn empirical_half_half() {
        let t = SamplingTable::from_counts(&[100, 100]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 1_000_000;
        let ones = (0..n).filter(|_| t.sample(&mut rng) == 1).count();
        let freq = ones as f64 / n as f64;
        assert!((freq - 0.5).abs() < 0.002, "{freq}");
    }

    #[test]
    fn seeded_draws_repeat() {
        let t = SamplingTable::from_counts(&[5, 100, 30, 7]).unwrap();
        let a = t.draw(&mut ChaCha8Rng::seed_from_u64(3), &[1], 50).unwrap();
        let b = t.draw(&mut ChaCha8Rng::seed_from_u64(3), &[1], 50).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn weights_are_monotone_in_counts(counts in proptest::collection::vec(1u64..10_000, 2..40)) {
            let total: u64 = counts.iter().sum();
            for a in &counts {
                for b in &counts {
                    if a > b {
                        let wa = weight_for_frequency(*a as f64 / total as f64, DEFAULT_FLOOR);
                        let wb = weight_for_frequency(*b as f64 / total as f64, DEFAULT_FLOOR);
                        prop_assert!(wa >= wb);
                    }
                }
            }
        }

        #[test]
        fn zero_weight_never_drawn(weights in proptest::collection::vec(prop_oneof![Just(0.0), 0.01f64..5.0], 2..30), seed: u64) {
            prop_assume!(weights.iter().any(|&w| w > 0.0));
            let t = SamplingTable::from_weights(&weights);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..2000 {
                let d = t.sample(&mut rng) as usize;
                prop_assert!(weights[d] > 0.0);
            }
        }

        #[test]
        fn alias_columns_reproduce_probabilities(weights in proptest::collection::vec(0.0f64..5.0, 1..50)) {
            prop_assume!(weights.iter().sum::<f64>() > 0.0);
            let t = SamplingTable::from_weights(&weights);
            let n = t.len() as f64;
            let mut mass = alloc::vec![0.0; t.len()];
            for i in 0..t.len() {
                mass[i] += t.alias_prob[i] / n;
                mass[t.alias[i] as usize] += (1.0 - t.alias_prob[i]) / n;
            }
            for (m, p) in mass.iter().zip(t.probabilities()) {
                prop_assert!((m - p).abs() < 1e-9, "{} vs {}", m, p);
            }
        }
    }
}
