//! Top-K complementary recommendations by brute-force scoring.

use alloc::vec::Vec;
use core::cmp::Ordering;

use thiserror::Error;

use crate::store::EmbeddingStore;

pub const DEFAULT_RECALL_POOL: usize = 100;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RankError {
    #[error("query context is empty")]
    EmptyContext,
    #[error("item index {0} is outside the catalog")]
    UnknownItem(u32),
    #[error("user index {0} is outside the user table")]
    UnknownUser(u32),
    #[error("this ranking mode needs a user; use rank_by_complement for user-free queries")]
    MissingUser,
    #[error("recall pool {pool} is smaller than k = {k}")]
    PoolTooSmall { k: usize, pool: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Query {
    pub context: Vec<u32>,
    pub user: Option<u32>,
    pub k: usize,
    pub recall_pool: usize,
}

impl Query {
    pub fn new(context: Vec<u32>, k: usize) -> Self {
        Self {
            context,
            user: None,
            k,
            recall_pool: DEFAULT_RECALL_POOL,
        }
    }

    pub fn with_user(mut self, user: u32) -> Self {
        self.user = Some(user);
        self
    }

    pub fn with_pool(mut self, pool: usize) -> Self {
        self.recall_pool = pool;
        self
    }
}

/// `(item, score)` pairs, best first.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RankedList(pub Vec<(u32, f64)>);

impl RankedList {
    pub fn items(&self) -> impl Iterator<Item = u32> + '_ {
        self.0.iter().map(|&(i, _)| i)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// 1-based rank of `item`, if listed.
    pub fn position(&self, item: u32) -> Option<usize> {
        self.0.iter().position(|&(i, _)| i == item).map(|p| p + 1)
    }
}

/// Higher score first, then lower index.
#[inline]
pub fn rank_order(a: &(u32, f64), b: &(u32, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Keeps the best `k` of `scored`, sorted.
pub fn top_k(mut scored: Vec<(u32, f64)>, k: usize) -> Vec<(u32, f64)> {
    if k == 0 {
        return Vec::new();
    }
    if scored.len() > k {
        scored.select_nth_unstable_by(k - 1, rank_order);
        scored.truncate(k);
    }
    scored.sort_unstable_by(rank_order);
    scored
}

fn check(q: &Query, store: &EmbeddingStore) -> Result<(), RankError> {
    if q.context.is_empty() {
        return Err(RankError::EmptyContext);
    }
    if let Some(&bad) = q.context.iter().find(|&&i| i as usize >= store.n_items()) {
        return Err(RankError::UnknownItem(bad));
    }
    if let Some(u) = q.user {
        if u as usize >= store.n_users() {
            return Err(RankError::UnknownUser(u));
        }
    }
    Ok(())
}

fn candidates<'a>(
    q: &'a Query,
    store: &EmbeddingStore,
    allow: Option<&'a [u32]>,
) -> impl Iterator<Item = u32> + 'a {
    let all = 0..store.n_items() as u32;
    let base: alloc::boxed::Box<dyn Iterator<Item = u32> + 'a> = match allow {
        Some(list) => alloc::boxed::Box::new(list.iter().copied()),
        None => alloc::boxed::Box::new(all),
    };
    let n = store.n_items() as u32;
    base.filter(move |j| *j < n && !q.context.contains(j))
}

/// Complement scores `s(j, ctx)` of every candidate.
pub fn complement_scores(
    q: &Query,
    store: &EmbeddingStore,
    allow: Option<&[u32]>,
) -> Result<Vec<(u32, f64)>, RankError> {
    check(q, store)?;
    let pooled = store.pooled_context(&q.context).map_err(|_| RankError::EmptyContext)?;
    Ok(candidates(q, store, allow)
        .map(|j| (j, store.item_out.dot_row(j as usize, &pooled)))
        .collect())
}

/// Ranks by `s(j, ctx)` alone.
pub fn rank_by_complement(
    q: &Query,
    store: &EmbeddingStore,
    allow: Option<&[u32]>,
) -> Result<RankedList, RankError> {
    Ok(RankedList(top_k(complement_scores(q, store, allow)?, q.k)))
}

/// Ranks by `s(j, u) + s(j, ctx)`.
pub fn rank_with_user(
    q: &Query,
    store: &EmbeddingStore,
    allow: Option<&[u32]>,
) -> Result<RankedList, RankError> {
    let u = q.user.ok_or(RankError::MissingUser)?;
    let mut scored = complement_scores(q, store, allow)?;
    for (j, s) in scored.iter_mut() {
        *s += store.score_user(*j, u);
    }
    Ok(RankedList(top_k(scored, q.k)))
}

/// Recalls `recall_pool` items by complement score, then orders them by the
/// user-aware score.
pub fn recall_rerank(
    q: &Query,
    store: &EmbeddingStore,
    allow: Option<&[u32]>,
) -> Result<RankedList, RankError> {
    let u = q.user.ok_or(RankError::MissingUser)?;
    if q.recall_pool < q.k {
        return Err(RankError::PoolTooSmall {
            k: q.k,
            pool: q.recall_pool,
        });
    }
    let mut pool = top_k(complement_scores(q, store, allow)?, q.recall_pool);
    for (j, s) in pool.iter_mut() {
        *s += store.score_user(*j, u);
    }
    Ok(RankedList(top_k(pool, q.k)))
}
