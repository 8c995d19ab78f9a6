//! Negative-sampled binary-logistic loss, its analytic gradient, and SGD.
//!
//! For one observation `(u, i_t, i_{t-1..t-k})` the loss is
//!
//! ```text
//! l = softplus(-(s(i_t,u) + s(i_t,ctx))) + sum_{n in Neg(I)} softplus(s(n,u) + s(n,ctx))
//!   + sum_{j=0..k} sum_{w in tokens(i_{t-j})} [ softplus(-s(w,i_{t-j})) + sum_{v in Neg_w} softplus(s(v,i_{t-j})) ]
//!   + sum_{x in tokens(u)} [ softplus(-s(x,u)) + sum_{y in Neg_x} softplus(s(y,u)) ]
//! ```
//!
//! with `s(i,ctx) = <item_out[i], mean(item_in[ctx])>`. The kernel copies every
//! row the observation touches into a local `f64` workspace (one slot per
//! occurrence), evaluates the loss and gradient there, and scatters the
//! update back. A row that occurs in several slots receives the sum of their
//! gradients.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::{ObsView, ObservationSet};
use crate::math::{axpy, dot, sigmoid, softplus};
use crate::sampler::{SamplerError, SamplingTable, DEFAULT_FLOOR};
use crate::store::{EmbeddingStore, ItemUserTable, StoreError, StoreShape};
use crate::vocab::{TokenLists, Vocabulary};

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("no training observations")]
    NoObservations,
    #[error("invalid training config: {0}")]
    Config(&'static str),
    #[error(
        "non-finite loss at step {step} (seq {seq}, item context {item_ctx}, user context {user_ctx}); \
         the learning rate {learning_rate} is probably too large"
    )]
    NonFinite {
        step: u64,
        seq: f64,
        item_ctx: f64,
        user_ctx: f64,
        learning_rate: f64,
    },
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Starting learning rate, decayed linearly over all steps.
    pub learning_rate: f64,
    /// Negatives per positive term.
    pub negatives: usize,
    pub threads: usize,
    pub seed: u64,
    pub dim: usize,
    pub user_dim: usize,
    pub item_user: ItemUserTable,
    pub use_user_bias: bool,
    pub use_item_context: bool,
    pub use_user_context: bool,
    pub neg_sample_floor: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            learning_rate: 0.025,
            negatives: 5,
            threads: 1,
            seed: 1,
            dim: 32,
            user_dim: 32,
            item_user: ItemUserTable::Tied,
            use_user_bias: true,
            use_item_context: true,
            use_user_context: true,
            neg_sample_floor: DEFAULT_FLOOR,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs < 1 {
            return Err(TrainError::Config("epochs must be >= 1"));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(TrainError::Config("learning_rate must be > 0"));
        }
        if self.negatives < 1 {
            return Err(TrainError::Config("negatives must be >= 1"));
        }
        if self.threads < 1 {
            return Err(TrainError::Config("threads must be >= 1"));
        }
        Ok(())
    }
}

/// Per-observation loss split by term family.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub seq_term: f64,
    pub item_context_term: f64,
    pub user_context_term: f64,
}

impl LossBreakdown {
    pub fn total(&self) -> f64 {
        self.seq_term + self.item_context_term + self.user_context_term
    }

    pub fn is_finite(&self) -> bool {
        self.seq_term.is_finite() && self.item_context_term.is_finite() && self.user_context_term.is_finite()
    }

    pub fn add(&mut self, o: &LossBreakdown) {
        self.seq_term += o.seq_term;
        self.item_context_term += o.item_context_term;
        self.user_context_term += o.user_context_term;
    }

    pub fn scaled(&self, by: f64) -> LossBreakdown {
        LossBreakdown {
            seq_term: self.seq_term * by,
            item_context_term: self.item_context_term * by,
            user_context_term: self.user_context_term * by,
        }
    }
}

/// Negative samples for one observation.
///
/// `item_tokens` holds `per_term` draws for each positive item token, in the
/// order target tokens first, then the tokens of each context item (most
/// recent first). `user_tokens` likewise for each user token.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Negatives {
    pub items: Vec<u32>,
    pub per_term: usize,
    pub item_tokens: Vec<u32>,
    pub user_tokens: Vec<u32>,
}

impl Negatives {
    pub fn clear(&mut self) {
        self.items.clear();
        self.item_tokens.clear();
        self.user_tokens.clear();
    }
}

/// Which loss families are active for a store/config pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Terms {
    pub user_bias: bool,
    pub item_context: bool,
    pub user_context: bool,
}

impl Terms {
    pub fn from_config(cfg: &TrainConfig) -> Self {
        Self {
            user_bias: cfg.use_user_bias,
            item_context: cfg.use_item_context,
            user_context: cfg.use_user_context,
        }
    }
}

/// Sampling tables for item, item-token and user-token negatives.
#[derive(Clone, Debug, PartialEq)]
pub struct NegativeSampler {
    pub items: SamplingTable,
    pub item_tokens: Option<SamplingTable>,
    pub user_tokens: Option<SamplingTable>,
}

impl NegativeSampler {
    /// Item frequencies are target occurrences; token frequencies count every
    /// occurrence of a token on an item (or user) of an observation.
    pub fn from_observations(
        obs: &ObservationSet,
        vocab: &Vocabulary,
        floor: f64,
    ) -> Result<Self, SamplerError> {
        let item_counts = obs.target_counts(vocab.n_items());
        let mut item_occ = alloc::vec![0u64; vocab.n_items()];
        let mut user_occ = alloc::vec![0u64; vocab.n_users()];
        for o in obs.iter() {
            item_occ[o.target as usize] += 1;
            for &c in o.context {
                item_occ[c as usize] += 1;
            }
            user_occ[o.user as usize] += 1;
        }
        let token_counts = |lists: &TokenLists, occ: &[u64], n: usize| {
            let mut c = alloc::vec![0u64; n];
            for (row, &times) in occ.iter().enumerate() {
                if row < lists.rows() {
                    for &t in lists.get(row as u32) {
                        c[t as usize] += times;
                    }
                }
            }
            c
        };
        let it = token_counts(&vocab.item_context, &item_occ, vocab.n_item_tokens());
        let ut = token_counts(&vocab.user_context, &user_occ, vocab.n_user_tokens());
        let optional = |c: Vec<u64>| -> Result<Option<SamplingTable>, SamplerError> {
            if c.iter().all(|&x| x == 0) {
                Ok(None)
            } else {
                SamplingTable::from_counts_with_floor(&c, floor).map(Some)
            }
        };
        Ok(Self {
            items: SamplingTable::from_counts_with_floor(&item_counts, floor)?,
            item_tokens: optional(it)?,
            user_tokens: optional(ut)?,
        })
    }

    /// Fresh negatives for `obs`; each positive is excluded from its own draw.
    pub fn draw<R: Rng + ?Sized>(
        &self,
        obs: ObsView<'_>,
        items_ctx: &TokenLists,
        users_ctx: &TokenLists,
        terms: Terms,
        per_term: usize,
        rng: &mut R,
        out: &mut Negatives,
    ) -> Result<(), SamplerError> {
        out.clear();
        out.per_term = per_term;
        self.items.draw_into(rng, &[obs.target], per_term, &mut out.items)?;
        if terms.item_context {
            if let Some(table) = &self.item_tokens {
                for item in core::iter::once(obs.target).chain(obs.context.iter().copied()) {
                    for &w in items_ctx.get(item) {
                        table.draw_into(rng, &[w], per_term, &mut out.item_tokens)?;
                    }
                }
            }
        }
        if terms.user_context {
            if let Some(table) = &self.user_tokens {
                if (obs.user as usize) < users_ctx.rows() {
                    for &x in users_ctx.get(obs.user) {
                        table.draw_into(rng, &[x], per_term, &mut out.user_tokens)?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Which table a workspace slot mirrors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TableId {
    ItemIn,
    ItemOut,
    User,
    ItemUser,
    Word,
    UserFeat,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Slot {
    pub table: TableId,
    pub row: u32,
    offset: usize,
    dim: usize,
}

/// A positive token term: the slot of the token row, followed in the slot
/// list by `per_term` negative slots, and the slot of the row it scores against.
#[derive(Clone, Copy, Debug)]
struct TokenTerm {
    first: usize,
    against: usize,
}

/// Local `f64` copy of every row one observation touches.
#[derive(Clone, Debug, Default)]
pub struct Workspace {
    slots: Vec<Slot>,
    values: Vec<f64>,
    grads: Vec<f64>,
    user: Option<usize>,
    out_first: usize,
    iu_first: Option<usize>,
    n_item_negs: usize,
    in_first: usize,
    k: usize,
    per_term: usize,
    word_terms: Vec<TokenTerm>,
    ufeat_terms: Vec<TokenTerm>,
    pooled: Vec<f64>,
    dpooled: Vec<f64>,
    tied_bias: bool,
}

impl Workspace {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, table: TableId, row: u32, dim: usize) -> usize {
        let offset = self.values.len();
        self.slots.push(Slot {
            table,
            row,
            offset,
            dim,
        });
        self.values.resize(offset + dim, 0.0);
        self.slots.len() - 1
    }

    /// Lays out slots for `obs` and copies the current row values in.
    pub fn gather(
        &mut self,
        obs: ObsView<'_>,
        negs: &Negatives,
        store: &EmbeddingStore,
        items_ctx: &TokenLists,
        users_ctx: &TokenLists,
        terms: Terms,
    ) {
        self.slots.clear();
        self.values.clear();
        self.word_terms.clear();
        self.ufeat_terms.clear();
        let dim = store.dim();
        let udim = store.user_dim();
        let per_term = negs.per_term.max(1);
        self.per_term = per_term;
        self.k = obs.context.len();
        self.n_item_negs = negs.items.len();

        let user_tokens: &[u32] = if terms.user_context && (obs.user as usize) < users_ctx.rows() {
            users_ctx.get(obs.user)
        } else {
            &[]
        };
        let user_tokens = if negs.user_tokens.len() == user_tokens.len() * per_term {
            user_tokens
        } else {
            &[]
        };
        self.user = if terms.user_bias || !user_tokens.is_empty() {
            Some(self.push(TableId::User, obs.user, udim))
        } else {
            None
        };

        self.out_first = self.push(TableId::ItemOut, obs.target, dim);
        for &n in &negs.items {
            self.push(TableId::ItemOut, n, dim);
        }
        self.tied_bias = terms.user_bias && store.item_user.is_none();
        self.iu_first = if terms.user_bias && store.item_user.is_some() {
            let first = self.push(TableId::ItemUser, obs.target, udim);
            for &n in &negs.items {
                self.push(TableId::ItemUser, n, udim);
            }
            Some(first)
        } else {
            None
        };

        self.in_first = self.push(TableId::ItemIn, obs.target, dim);
        for &c in obs.context {
            self.push(TableId::ItemIn, c, dim);
        }

        if terms.item_context && !negs.item_tokens.is_empty() {
            let mut cursor = 0;
            for (pos, item) in core::iter::once(obs.target)
                .chain(obs.context.iter().copied())
                .enumerate()
            {
                for &w in items_ctx.get(item) {
                    let first = self.push(TableId::Word, w, dim);
                    for &v in &negs.item_tokens[cursor..cursor + per_term] {
                        self.push(TableId::Word, v, dim);
                    }
                    cursor += per_term;
                    self.word_terms.push(TokenTerm {
                        first,
                        against: self.in_first + pos,
                    });
                }
            }
            debug_assert_eq!(cursor, negs.item_tokens.len());
        }

        if let Some(user_slot) = self.user {
            let mut cursor = 0;
            for &x in user_tokens {
                let first = self.push(TableId::UserFeat, x, udim);
                for &y in &negs.user_tokens[cursor..cursor + per_term] {
                    self.push(TableId::UserFeat, y, udim);
                }
                cursor += per_term;
                self.ufeat_terms.push(TokenTerm {
                    first,
                    against: user_slot,
                });
            }
        }

        for i in 0..self.slots.len() {
            let s = self.slots[i];
            let m = table_of(store, s.table);
            m.read_row(s.row as usize, &mut self.values[s.offset..s.offset + s.dim]);
        }
        self.grads.clear();
        self.grads.resize(self.values.len(), 0.0);
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn slot_values(&self, slot: usize) -> &[f64] {
        let s = self.slots[slot];
        &self.values[s.offset..s.offset + s.dim]
    }

    pub fn slot_values_mut(&mut self, slot: usize) -> &mut [f64] {
        let s = self.slots[slot];
        &mut self.values[s.offset..s.offset + s.dim]
    }

    pub fn slot_grad(&self, slot: usize) -> &[f64] {
        let s = self.slots[slot];
        &self.grads[s.offset..s.offset + s.dim]
    }

    fn val(&self, slot: usize) -> &[f64] {
        self.slot_values(slot)
    }

    /// Loss of the gathered observation; with `with_grad` the gradient with
    /// respect to every slot is left in the workspace.
    pub fn evaluate(&mut self, with_grad: bool) -> LossBreakdown {
        let mut loss = LossBreakdown::default();
        if with_grad {
            self.grads.iter_mut().for_each(|g| *g = 0.0);
        }
        let dim = self.slots[self.out_first].dim;

        // mean-pooled context, left to right
        self.pooled.clear();
        self.pooled.resize(dim, 0.0);
        for q in 0..self.k {
            let s = self.slots[self.in_first + 1 + q];
            for (p, v) in self.pooled.iter_mut().zip(&self.values[s.offset..s.offset + dim]) {
                *p += v;
            }
        }
        let inv_k = 1.0 / self.k as f64;
        self.pooled.iter_mut().for_each(|p| *p *= inv_k);
        self.dpooled.clear();
        self.dpooled.resize(dim, 0.0);

        for n in 0..=self.n_item_negs {
            let out = self.out_first + n;
            let mut q = dot(self.val(out), &self.pooled);
            let bias_slot = self.bias_slot(n);
            if let (Some(b), Some(u)) = (bias_slot, self.user) {
                q += dot(self.val(b), self.val(u));
            }
            // positive: softplus(-q); negatives: softplus(q)
            let (l, g) = if n == 0 {
                (softplus(-q), -sigmoid(-q))
            } else {
                (softplus(q), sigmoid(q))
            };
            loss.seq_term += l;
            if with_grad {
                let out_off = self.slots[out].offset;
                axpy(&mut self.grads[out_off..out_off + dim], g, &self.pooled);
                axpy(&mut self.dpooled, g, &self.values[out_off..out_off + dim]);
                if let (Some(b), Some(u)) = (bias_slot, self.user) {
                    let (bs, us) = (self.slots[b], self.slots[u]);
                    for c in 0..us.dim {
                        let bv = self.values[bs.offset + c];
                        let uv = self.values[us.offset + c];
                        self.grads[bs.offset + c] += g * uv;
                        self.grads[us.offset + c] += g * bv;
                    }
                }
            }
        }
        if with_grad {
            for q in 0..self.k {
                let off = self.slots[self.in_first + 1 + q].offset;
                axpy(&mut self.grads[off..off + dim], inv_k, &self.dpooled);
            }
        }

        let terms = core::mem::take(&mut self.word_terms);
        for t in &terms {
            loss.item_context_term += self.token_term(t, with_grad);
        }
        self.word_terms = terms;
        let terms = core::mem::take(&mut self.ufeat_terms);
        for t in &terms {
            loss.user_context_term += self.token_term(t, with_grad);
        }
        self.ufeat_terms = terms;
        loss
    }

    fn bias_slot(&self, n: usize) -> Option<usize> {
        if let Some(first) = self.iu_first {
            Some(first + n)
        } else if self.tied_bias {
            Some(self.out_first + n)
        } else {
            None
        }
    }

    fn token_term(&mut self, t: &TokenTerm, with_grad: bool) -> f64 {
        let a = self.slots[t.against];
        let mut l = 0.0;
        for n in 0..=self.per_term {
            let s = self.slots[t.first + n];
            let q = dot(
                &self.values[s.offset..s.offset + s.dim],
                &self.values[a.offset..a.offset + a.dim],
            );
            let (li, g) = if n == 0 {
                (softplus(-q), -sigmoid(-q))
            } else {
                (softplus(q), sigmoid(q))
            };
            l += li;
            if with_grad {
                for c in 0..s.dim {
                    let sv = self.values[s.offset + c];
                    let av = self.values[a.offset + c];
                    self.grads[s.offset + c] += g * av;
                    self.grads[a.offset + c] += g * sv;
                }
            }
        }
        l
    }

    /// Applies `row -= lr * grad` for every slot, in slot order.
    pub fn scatter(&self, store: &EmbeddingStore, learning_rate: f64) {
        for s in &self.slots {
            table_of(store, s.table).add_scaled(
                s.row as usize,
                -learning_rate,
                &self.grads[s.offset..s.offset + s.dim],
            );
        }
    }
}

fn table_of(store: &EmbeddingStore, t: TableId) -> &crate::store::Matrix {
    match t {
        TableId::ItemIn => &store.item_in,
        TableId::ItemOut => &store.item_out,
        TableId::User => &store.user,
        TableId::ItemUser => store.item_user.as_ref().expect("separate item-user table"),
        TableId::Word => &store.word,
        TableId::UserFeat => &store.user_feat,
    }
}

/// Evaluates the loss of one observation against fixed negatives.
pub fn observation_loss(
    obs: ObsView<'_>,
    negs: &Negatives,
    store: &EmbeddingStore,
    vocab: &Vocabulary,
    terms: Terms,
) -> Result<LossBreakdown, TrainError> {
    let mut ws = Workspace::new();
    ws.gather(obs, negs, store, &vocab.item_context, &vocab.user_context, terms);
    let l = ws.evaluate(false);
    if !l.is_finite() {
        return Err(TrainError::NonFinite {
            step: 0,
            seq: l.seq_term,
            item_ctx: l.item_context_term,
            user_ctx: l.user_context_term,
            learning_rate: 0.0,
        });
    }
    Ok(l)
}

/// One gradient step on one observation. Returns the loss before the update.
pub fn sgd_step(
    ws: &mut Workspace,
    obs: ObsView<'_>,
    negs: &Negatives,
    store: &EmbeddingStore,
    vocab: &Vocabulary,
    terms: Terms,
    learning_rate: f64,
) -> LossBreakdown {
    ws.gather(obs, negs, store, &vocab.item_context, &vocab.user_context, terms);
    let l = ws.evaluate(true);
    ws.scatter(store, learning_rate);
    l
}

/// Linear decay from `base` towards 0, floored at `base * 1e-4`.
pub fn learning_rate(step: u64, total_steps: u64, base: f64) -> f64 {
    let frac = if total_steps == 0 {
        0.0
    } else {
        step as f64 / total_steps as f64
    };
    base * (1.0 - frac).max(1e-4)
}

/// Running sum of per-step losses.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossSum {
    pub sum: LossBreakdown,
    pub steps: u64,
}

impl LossSum {
    pub fn merge(&mut self, o: &LossSum) {
        self.sum.add(&o.sum);
        self.steps += o.steps;
    }

    pub fn mean(&self) -> LossBreakdown {
        if self.steps == 0 {
            LossBreakdown::default()
        } else {
            self.sum.scaled(1.0 / self.steps as f64)
        }
    }
}

/// Per-epoch monitoring record.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: LossBreakdown,
    pub steps: u64,
    pub final_learning_rate: f64,
}

/// Everything a worker needs to run SGD over part of an epoch.
pub struct TrainContext<'a> {
    pub store: &'a EmbeddingStore,
    pub observations: &'a ObservationSet,
    pub vocab: &'a Vocabulary,
    pub sampler: &'a NegativeSampler,
    pub config: &'a TrainConfig,
    /// Visiting order, shuffled once before the first epoch.
    pub order: &'a [u32],
}

impl TrainContext<'_> {
    pub fn total_steps(&self) -> u64 {
        self.order.len() as u64 * self.config.epochs as u64
    }

    /// Runs positions `start, start + stride, ...` of `epoch`'s sequence.
    pub fn run_shard(
        &self,
        epoch: usize,
        start: usize,
        stride: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<LossSum, TrainError> {
        let terms = Terms::from_config(self.config);
        let n = self.order.len();
        let total = self.total_steps();
        let mut ws = Workspace::new();
        let mut negs = Negatives::default();
        let mut acc = LossSum::default();
        let mut pos = start;
        while pos < n {
            let obs = self.observations.get(self.order[pos] as usize);
            let step = (epoch * n + pos) as u64;
            let lr = learning_rate(step, total, self.config.learning_rate);
            self.sampler.draw(
                obs,
                &self.vocab.item_context,
                &self.vocab.user_context,
                terms,
                self.config.negatives,
                rng,
                &mut negs,
            )?;
            let l = sgd_step(&mut ws, obs, &negs, self.store, self.vocab, terms, lr);
            if !l.is_finite() {
                return Err(TrainError::NonFinite {
                    step,
                    seq: l.seq_term,
                    item_ctx: l.item_context_term,
                    user_ctx: l.user_context_term,
                    learning_rate: lr,
                });
            }
            acc.sum.add(&l);
            acc.steps += 1;
            pos += stride;
        }
        Ok(acc)
    }
}

/// RNG for worker `worker`: seeded with `seed + worker`.
pub fn worker_rng(seed: u64, worker: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_add(worker as u64))
}

/// The once-shuffled visiting order.
pub fn shuffled_order(n: usize, seed: u64) -> Vec<u32> {
    let mut order: Vec<u32> = (0..n as u32).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    order.shuffle(&mut rng);
    order
}

/// Table shape implied by a vocabulary and config.
pub fn store_shape(vocab: &Vocabulary, cfg: &TrainConfig) -> StoreShape {
    StoreShape {
        items: vocab.n_items(),
        users: vocab.n_users(),
        item_tokens: vocab.n_item_tokens(),
        user_tokens: vocab.n_user_tokens(),
        dim: cfg.dim,
        user_dim: cfg.user_dim,
        item_user: cfg.item_user,
    }
}

/// Single-threaded, deterministic training run into an existing store.
pub fn train_into(
    store: &EmbeddingStore,
    observations: &ObservationSet,
    vocab: &Vocabulary,
    sampler: &NegativeSampler,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<(), TrainError> {
    config.validate()?;
    if observations.is_empty() {
        return Err(TrainError::NoObservations);
    }
    let order = shuffled_order(observations.len(), config.seed);
    let ctx = TrainContext {
        store,
        observations,
        vocab,
        sampler,
        config,
        order: &order,
    };
    let mut rng = worker_rng(config.seed, 0);
    for epoch in 0..config.epochs {
        let acc = ctx.run_shard(epoch, 0, 1, &mut rng)?;
        on_epoch(&EpochStats {
            epoch,
            mean_loss: acc.mean(),
            steps: acc.steps,
            final_learning_rate: learning_rate(
                ((epoch + 1) * order.len()) as u64 - 1,
                ctx.total_steps(),
                config.learning_rate,
            ),
        });
    }
    Ok(())
}

/// Initializes a store and trains it single-threaded.
pub fn train(
    observations: &ObservationSet,
    vocab: &Vocabulary,
    config: &TrainConfig,
    on_epoch: impl FnMut(&EpochStats),
) -> Result<EmbeddingStore, TrainError> {
    config.validate()?;
    if observations.is_empty() {
        return Err(TrainError::NoObservations);
    }
    let store = EmbeddingStore::init(store_shape(vocab, config), config.seed)?;
    let sampler = NegativeSampler::from_observations(observations, vocab, config.neg_sample_floor)?;
    train_into(&store, observations, vocab, &sampler, config, on_epoch)?;
    Ok(store)
}
