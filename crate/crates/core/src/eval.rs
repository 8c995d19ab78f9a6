//! Evaluation protocols: within-basket hold-out, next-purchase ranking, and
//! the Jaccard cold-item baseline.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{runs_by, Event, SECONDS_PER_DAY};
use crate::metrics::{auc, gain, hit_at_k, ndcg_at_k};
use crate::rank::{rank_by_complement, rank_with_user, recall_rerank, Query, RankError};
use crate::store::EmbeddingStore;
use crate::vocab::TokenLists;

/// Named metric values plus free-form protocol notes, in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub metrics: Vec<(String, f64)>,
    pub notes: Vec<(String, String)>,
}

impl EvalReport {
    pub fn set(&mut self, key: &str, value: f64) {
        match self.metrics.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.metrics.push((key.to_string(), value)),
        }
    }

    pub fn note(&mut self, key: &str, value: impl ToString) {
        self.notes.push((key.to_string(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.metrics.iter().find(|(k, _)| k == key).map(|m| m.1)
    }

    pub fn extend(&mut self, other: EvalReport) {
        for (k, v) in other.metrics {
            self.set(&k, v);
        }
        self.notes.extend(other.notes);
    }

    /// `key=value` lines, notes first.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.notes {
            let _ = writeln!(s, "{k}={v}");
        }
        for (k, v) in &self.metrics {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    /// Header line and value line, tab separated.
    pub fn to_tsv(&self) -> (String, String) {
        let keys: Vec<&str> = self.metrics.iter().map(|(k, _)| k.as_str()).collect();
        let vals: Vec<String> = self.metrics.iter().map(|(_, v)| alloc::format!("{v:.6}")).collect();
        (keys.join("\t"), vals.join("\t"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WithinBasketConfig {
    /// Sampled negatives per held-out item.
    pub negatives: usize,
    pub seed: u64,
}

impl Default for WithinBasketConfig {
    fn default() -> Self {
        Self {
            negatives: 100,
            seed: 7,
        }
    }
}

/// Running sums for within-basket metrics; merge order does not matter
/// beyond float rounding, so merge shards in index order.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BasketAcc {
    pub auc_sum: f64,
    pub ndcg_sum: f64,
    pub cases: u64,
    pub baskets: u64,
}

impl BasketAcc {
    pub fn merge(&mut self, o: &BasketAcc) {
        self.auc_sum += o.auc_sum;
        self.ndcg_sum += o.ndcg_sum;
        self.cases += o.cases;
        self.baskets += o.baskets;
    }

    pub fn report(&self, cfg: &WithinBasketConfig, prefix: &str) -> EvalReport {
        let mut r = EvalReport::default();
        let n = self.cases.max(1) as f64;
        r.set(&alloc::format!("{prefix}auc"), self.auc_sum / n);
        r.set(&alloc::format!("{prefix}ndcg"), self.ndcg_sum / n);
        r.set(&alloc::format!("{prefix}cases"), self.cases as f64);
        r.note(&alloc::format!("{prefix}protocol"), alloc::format!(
            "hold out each basket item; rest of basket as context; {} uniform negatives from the catalog minus the basket; seed {}",
            cfg.negatives, cfg.seed
        ));
        r
    }
}

/// AUC and NDCG of one positive among sampled negatives. Ties rank the lower
/// index first.
pub fn score_case(store: &EmbeddingStore, pooled: &[f64], target: u32, negatives: &[u32]) -> (f64, f64) {
    let pos = store.item_out.dot_row(target as usize, pooled);
    let neg: Vec<f64> = negatives
        .iter()
        .map(|&n| store.item_out.dot_row(n as usize, pooled))
        .collect();
    let above = negatives
        .iter()
        .zip(&neg)
        .filter(|&(&n, &s)| s > pos || (s == pos && n < target))
        .count();
    (auc(&[pos], &neg), gain(above + 1))
}

/// Uniform draws from `pool` avoiding `exclude`; `None` if nothing is left.
fn draw_uniform(
    rng: &mut ChaCha8Rng,
    pool: Option<&[u32]>,
    n_items: usize,
    exclude: &[u32],
    count: usize,
    out: &mut Vec<u32>,
) -> Option<()> {
    out.clear();
    let len = pool.map_or(n_items, |p| p.len());
    let excluded = match pool {
        Some(p) => p.iter().filter(|i| exclude.contains(i)).count(),
        None => {
            let mut e: Vec<u32> = exclude.iter().copied().filter(|&i| (i as usize) < n_items).collect();
            e.sort_unstable();
            e.dedup();
            e.len()
        }
    };
    if excluded >= len {
        return None;
    }
    while out.len() < count {
        let idx = rng.gen_range(0..len);
        let item = pool.map_or(idx as u32, |p| p[idx]);
        if !exclude.contains(&item) {
            out.push(item);
        }
    }
    Some(())
}

fn basket_rng(cfg: &WithinBasketConfig, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    rng
}

fn dedup_keep_order(basket: &[u32]) -> Vec<u32> {
    let mut out: Vec<u32> = Vec::with_capacity(basket.len());
    for &i in basket {
        if !out.contains(&i) {
            out.push(i);
        }
    }
    out
}

/// Adds the cases of basket `index` to `acc`. Baskets with fewer than two
/// distinct items contribute nothing.
pub fn eval_basket(index: usize, basket: &[u32], store: &EmbeddingStore, cfg: &WithinBasketConfig, acc: &mut BasketAcc) {
    let items = dedup_keep_order(basket);
    if items.len() < 2 {
        return;
    }
    let mut rng = basket_rng(cfg, index);
    let mut negs = Vec::new();
    let mut ctx = Vec::with_capacity(items.len() - 1);
    let mut counted = false;
    for (h, &target) in items.iter().enumerate() {
        ctx.clear();
        ctx.extend(items.iter().enumerate().filter(|&(i, _)| i != h).map(|(_, &x)| x));
        if draw_uniform(&mut rng, None, store.n_items(), &items, cfg.negatives, &mut negs).is_none() {
            return;
        }
        let pooled = store.pooled_context(&ctx).expect("context has at least one item");
        let (a, n) = score_case(store, &pooled, target, &negs);
        acc.auc_sum += a;
        acc.ndcg_sum += n;
        acc.cases += 1;
        counted = true;
    }
    if counted {
        acc.baskets += 1;
    }
}

pub fn within_basket_acc(baskets: &[Vec<u32>], store: &EmbeddingStore, cfg: &WithinBasketConfig) -> BasketAcc {
    let mut acc = BasketAcc::default();
    for (i, b) in baskets.iter().enumerate() {
        eval_basket(i, b, store, cfg, &mut acc);
    }
    acc
}

/// Mean AUC and NDCG over every hold-out of every basket.
pub fn within_basket_eval(baskets: &[Vec<u32>], store: &EmbeddingStore, cfg: &WithinBasketConfig) -> EvalReport {
    within_basket_acc(baskets, store, cfg).report(cfg, "within_basket_")
}

/// Cold-item variant: the basket's cold items form the context, each warm
/// item is held out in turn, and negatives come from warm items outside the
/// basket.
pub fn eval_cold_basket(
    index: usize,
    basket: &[u32],
    is_cold: &[bool],
    warm: &[u32],
    store: &EmbeddingStore,
    cfg: &WithinBasketConfig,
    acc: &mut BasketAcc,
) {
    let items = dedup_keep_order(basket);
    let ctx: Vec<u32> = items.iter().copied().filter(|&i| is_cold[i as usize]).collect();
    if ctx.is_empty() || ctx.len() == items.len() {
        return;
    }
    let mut rng = basket_rng(cfg, index);
    let mut negs = Vec::new();
    let pooled = store.pooled_context(&ctx).expect("non-empty cold context");
    let mut counted = false;
    for &target in items.iter().filter(|&&i| !is_cold[i as usize]) {
        if draw_uniform(&mut rng, Some(warm), store.n_items(), &items, cfg.negatives, &mut negs).is_none() {
            break;
        }
        let (a, n) = score_case(store, &pooled, target, &negs);
        acc.auc_sum += a;
        acc.ndcg_sum += n;
        acc.cases += 1;
        counted = true;
    }
    if counted {
        acc.baskets += 1;
    }
}

pub fn cold_basket_eval(
    baskets: &[Vec<u32>],
    is_cold: &[bool],
    store: &EmbeddingStore,
    cfg: &WithinBasketConfig,
) -> EvalReport {
    let warm: Vec<u32> = (0..is_cold.len() as u32).filter(|&i| !is_cold[i as usize]).collect();
    let mut acc = BasketAcc::default();
    for (i, b) in baskets.iter().enumerate() {
        eval_cold_basket(i, b, is_cold, &warm, store, cfg, &mut acc);
    }
    let mut r = acc.report(cfg, "cold_");
    r.notes.clear();
    r.note(
        "cold_protocol",
        alloc::format!(
            "cold basket items as context; each warm basket item held out; {} uniform warm negatives outside the basket; seed {}",
            cfg.negatives, cfg.seed
        ),
    );
    r
}

/// Expected NDCG of a uniformly random rank among `candidates`.
pub fn chance_ndcg(candidates: usize) -> f64 {
    (1..=candidates).map(gain).sum::<f64>() / candidates as f64
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NextPurchaseQuery {
    pub user: u32,
    /// Most recent first.
    pub context: Vec<u32>,
    /// Distinct items bought in the label window, outside the context.
    pub labels: Vec<u32>,
}

/// One query per user: context is the user's last `k` purchases within `d1`
/// days before `cutoff`, labels are the purchases within `d2` days from it.
pub fn next_purchase_queries(events: &[Event], cutoff: i64, d1: i64, d2: i64, k: usize) -> Vec<NextPurchaseQuery> {
    let mut out = Vec::new();
    let ctx_start = cutoff - d1 * SECONDS_PER_DAY;
    let label_end = cutoff + d2 * SECONDS_PER_DAY;
    for run in runs_by(events, |e| e.user) {
        let mut context = Vec::new();
        for e in run.iter().rev().filter(|e| e.time < cutoff) {
            if e.time < ctx_start || context.len() == k {
                break;
            }
            context.push(e.item);
        }
        let mut labels: Vec<u32> = run
            .iter()
            .filter(|e| e.time >= cutoff && e.time < label_end && !context.contains(&e.item))
            .map(|e| e.item)
            .collect();
        labels.sort_unstable();
        labels.dedup();
        if !context.is_empty() && !labels.is_empty() {
            out.push(NextPurchaseQuery {
                user: run[0].user,
                context,
                labels,
            });
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RankMode {
    Complement,
    User,
    TwoStage { pool: usize },
}

/// Hit@K and NDCG@K of one query for each K in `ks`.
pub fn next_purchase_query_metrics(
    q: &NextPurchaseQuery,
    store: &EmbeddingStore,
    mode: RankMode,
    ks: &[usize],
    allow: Option<&[u32]>,
) -> Result<Vec<(f64, f64)>, RankError> {
    let kmax = ks.iter().copied().max().unwrap_or(0);
    let query = Query {
        context: q.context.clone(),
        user: Some(q.user),
        k: kmax,
        recall_pool: match mode {
            RankMode::TwoStage { pool } => pool.max(kmax),
            _ => kmax,
        },
    };
    let ranked = match mode {
        RankMode::Complement => rank_by_complement(&query, store, allow)?,
        RankMode::User => rank_with_user(&query, store, allow)?,
        RankMode::TwoStage { .. } => recall_rerank(&query, store, allow)?,
    };
    let flags: Vec<bool> = ranked.items().map(|i| q.labels.binary_search(&i).is_ok()).collect();
    Ok(ks
        .iter()
        .map(|&k| (hit_at_k(&flags, k), ndcg_at_k(&flags, k, q.labels.len())))
        .collect())
}

/// Per-K sums of Hit and NDCG.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NextPurchaseAcc {
    pub hit: Vec<f64>,
    pub ndcg: Vec<f64>,
    pub queries: u64,
}

impl NextPurchaseAcc {
    pub fn add(&mut self, per_k: &[(f64, f64)]) {
        if self.hit.is_empty() {
            self.hit = alloc::vec![0.0; per_k.len()];
            self.ndcg = alloc::vec![0.0; per_k.len()];
        }
        for (i, (h, n)) in per_k.iter().enumerate() {
            self.hit[i] += h;
            self.ndcg[i] += n;
        }
        self.queries += 1;
    }

    pub fn merge(&mut self, o: &NextPurchaseAcc) {
        if o.queries == 0 {
            return;
        }
        if self.hit.is_empty() {
            self.hit = alloc::vec![0.0; o.hit.len()];
            self.ndcg = alloc::vec![0.0; o.ndcg.len()];
        }
        for i in 0..o.hit.len() {
            self.hit[i] += o.hit[i];
            self.ndcg[i] += o.ndcg[i];
        }
        self.queries += o.queries;
    }

    pub fn report(&self, ks: &[usize], prefix: &str) -> EvalReport {
        let mut r = EvalReport::default();
        let n = self.queries.max(1) as f64;
        for (i, k) in ks.iter().enumerate() {
            r.set(&alloc::format!("{prefix}hit@{k}"), self.hit.get(i).copied().unwrap_or(0.0) / n);
            r.set(&alloc::format!("{prefix}ndcg@{k}"), self.ndcg.get(i).copied().unwrap_or(0.0) / n);
        }
        r.set(&alloc::format!("{prefix}queries"), self.queries as f64);
        r
    }
}

pub fn next_purchase_eval(
    queries: &[NextPurchaseQuery],
    store: &EmbeddingStore,
    mode: RankMode,
    ks: &[usize],
) -> Result<EvalReport, RankError> {
    let mut acc = NextPurchaseAcc::default();
    for q in queries {
        acc.add(&next_purchase_query_metrics(q, store, mode, ks, None)?);
    }
    Ok(acc.report(ks, "next_purchase_"))
}

fn sorted_set(tokens: &[u32]) -> Vec<u32> {
    let mut v = tokens.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

/// For each cold item, the warm item with the highest token Jaccard
/// similarity. Ties, including the all-zero case, go to the lowest warm index.
pub fn jaccard_nearest(cold: &[u32], warm: &[u32], tokens: &TokenLists) -> Vec<u32> {
    let mut warm_sorted = warm.to_vec();
    warm_sorted.sort_unstable();
    let sets: BTreeMap<u32, Vec<u32>> = warm_sorted.iter().map(|&w| (w, sorted_set(tokens.get(w)))).collect();
    let mut postings: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for (&w, set) in &sets {
        for &t in set {
            postings.entry(t).or_default().push(w);
        }
    }
    cold.iter()
        .map(|&c| {
            let cs = sorted_set(tokens.get(c));
            let mut inter: BTreeMap<u32, usize> = BTreeMap::new();
            for t in &cs {
                for &w in postings.get(t).map(|v| v.as_slice()).unwrap_or(&[]) {
                    *inter.entry(w).or_default() += 1;
                }
            }
            let mut best = (warm_sorted[0], 0.0f64);
            for (&w, &n) in &inter {
                let union = cs.len() + sets[&w].len() - n;
                let j = n as f64 / union as f64;
                if j > best.1 || (j == best.1 && w < best.0) {
                    best = (w, j);
                }
            }
            best.0
        })
        .collect()
}

/// Copies each cold item's nearest warm item-in row over the cold row.
pub fn apply_jaccard_baseline(store: &EmbeddingStore, cold: &[u32], warm: &[u32], tokens: &TokenLists) -> Vec<u32> {
    let nearest = jaccard_nearest(cold, warm, tokens);
    let mut row = alloc::vec![0.0; store.dim()];
    for (&c, &w) in cold.iter().zip(&nearest) {
        store.item_in.read_row(w as usize, &mut row);
        let r32: Vec<f32> = row.iter().map(|&v| v as f32).collect();
        store.item_in.write_row(c as usize, &r32);
    }
    nearest
}
