//! Item-in vectors for items that never appeared in training, inferred from
//! their context tokens.
//!
//! The solver maximizes
//! `sum_w [ <W_w, z> - ln sum_{v in Neg_w + {w}} exp(<W_v, z>) ]`
//! by projected gradient ascent on the ball `|z| <= norm_cap`.

use alloc::vec::Vec;

use rand::RngCore;
use thiserror::Error;

use crate::math::{axpy, dot, norm};
use crate::sampler::{SamplerError, SamplingTable};
use crate::store::EmbeddingStore;

#[derive(Debug, Error, PartialEq)]
pub enum ColdStartError {
    #[error("no known context tokens for the cold item")]
    NoTokens,
    #[error("token index {0} is outside the trained token table")]
    TokenOutOfRange(u32),
    #[error("norm cap must be positive, got {0}")]
    BadNormCap(f64),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ColdStartParams {
    pub steps: usize,
    /// Step size at iteration `t` (1-based) is `step_size / sqrt(t)`.
    pub step_size: f64,
    /// `None` uses the 95th percentile of trained item-in row norms.
    pub norm_cap: Option<f64>,
    pub negatives: usize,
}

impl Default for ColdStartParams {
    fn default() -> Self {
        Self {
            steps: 200,
            step_size: 0.05,
            norm_cap: None,
            negatives: 5,
        }
    }
}

/// Where the contrastive tokens of each step come from.
pub enum NegativeSource<'a> {
    /// Fresh draws per step and per token.
    Sampled {
        table: &'a SamplingTable,
        rng: &'a mut dyn RngCore,
    },
    /// The same list for every token and step. Makes the objective
    /// deterministic.
    Fixed(&'a [u32]),
}

/// Value of the objective at `z` against a fixed negative list.
pub fn objective(store: &EmbeddingStore, tokens: &[u32], negatives: &[u32], z: &[f64]) -> f64 {
    let neg_scores: Vec<f64> = negatives.iter().map(|&v| store.word.dot_row(v as usize, z)).collect();
    tokens
        .iter()
        .map(|&w| {
            let pos = store.word.dot_row(w as usize, z);
            pos - log_sum_exp(core::iter::once(pos).chain(neg_scores.iter().copied()))
        })
        .sum()
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    m + libm::log(xs.map(|x| libm::exp(x - m)).sum::<f64>())
}

fn project(z: &mut [f64], cap: f64) {
    let n = norm(z);
    if n > cap {
        let s = cap / n;
        z.iter_mut().for_each(|v| *v *= s);
    }
}

/// Infers an item-in vector for a cold item carrying `tokens`.
pub fn infer(
    tokens: &[u32],
    store: &EmbeddingStore,
    params: &ColdStartParams,
    mut negatives: NegativeSource<'_>,
) -> Result<Vec<f64>, ColdStartError> {
    if tokens.is_empty() {
        return Err(ColdStartError::NoTokens);
    }
    if let Some(&bad) = tokens.iter().find(|&&w| w as usize >= store.word.rows()) {
        return Err(ColdStartError::TokenOutOfRange(bad));
    }
    let cap = params
        .norm_cap
        .unwrap_or_else(|| store.item_in_norm_percentile(95.0));
    if !(cap > 0.0) {
        return Err(ColdStartError::BadNormCap(cap));
    }
    let dim = store.dim();
    let mut z = alloc::vec![0.0; dim];
    let mut row = alloc::vec![0.0; dim];
    for &w in tokens {
        store.word.read_row(w as usize, &mut row);
        axpy(&mut z, 1.0, &row);
    }
    z.iter_mut().for_each(|v| *v /= tokens.len() as f64);
    project(&mut z, cap);

    let mut grad = alloc::vec![0.0; dim];
    let mut drawn = Vec::new();
    let mut cand = Vec::new();
    let mut weights = Vec::new();
    for t in 1..=params.steps {
        grad.iter_mut().for_each(|g| *g = 0.0);
        for &w in tokens {
            cand.clear();
            cand.push(w);
            match &mut negatives {
                NegativeSource::Fixed(list) => cand.extend_from_slice(list),
                NegativeSource::Sampled { table, rng } => {
                    drawn.clear();
                    table.draw_into(*rng, &[w], params.negatives, &mut drawn)?;
                    cand.extend_from_slice(&drawn);
                }
            }
            // d/dz [s_w - lse(s_c)] = W_w - sum_c softmax_c W_c
            weights.clear();
            weights.extend(cand.iter().map(|&c| store.word.dot_row(c as usize, &z)));
            let m = weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            weights.iter_mut().for_each(|s| *s = libm::exp(*s - m));
            let total: f64 = weights.iter().sum();
            for (i, &c) in cand.iter().enumerate() {
                store.word.read_row(c as usize, &mut row);
                let coef = if i == 0 { 1.0 } else { 0.0 } - weights[i] / total;
                axpy(&mut grad, coef, &row);
            }
        }
        let eta = params.step_size / libm::sqrt(t as f64);
        axpy(&mut z, eta, &grad);
        project(&mut z, cap);
    }
    Ok(z)
}

/// Cosine similarity; zero if either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let d = norm(a) * norm(b);
    if d == 0.0 {
        0.0
    } else {
        dot(a, b) / d
    }
}
