//! Parallel evaluation. Work is split into contiguous chunks, one per
//! worker, and partial sums are merged in chunk order so results do not
//! depend on the thread count beyond float summation order.

use dualcart_core::eval::{
    eval_basket, eval_cold_basket, next_purchase_query_metrics, BasketAcc, NextPurchaseAcc, NextPurchaseQuery,
    RankMode,
};
use dualcart_core::{EmbeddingStore, EvalReport, RankError, WithinBasketConfig};

fn chunks(n: usize, threads: usize) -> Vec<std::ops::Range<usize>> {
    let t = threads.max(1).min(n.max(1));
    let size = n.div_ceil(t);
    (0..t).map(|i| (i * size).min(n)..((i + 1) * size).min(n)).collect()
}

/// Runs `f` on each chunk of `0..n` in its own thread and returns the
/// per-chunk results in order.
pub fn map_chunks<T: Send>(n: usize, threads: usize, f: impl Fn(std::ops::Range<usize>) -> T + Sync) -> Vec<T> {
    let ranges = chunks(n, threads);
    if ranges.len() == 1 {
        return vec![f(ranges[0].clone())];
    }
    std::thread::scope(|s| {
        let handles: Vec<_> = ranges.into_iter().map(|r| s.spawn(|| f(r))).collect();
        handles.into_iter().map(|h| h.join().expect("evaluation worker panicked")).collect()
    })
}

pub fn within_basket_acc(
    baskets: &[Vec<u32>],
    store: &EmbeddingStore,
    cfg: &WithinBasketConfig,
    threads: usize,
) -> BasketAcc {
    let parts = map_chunks(baskets.len(), threads, |r| {
        let mut acc = BasketAcc::default();
        for i in r {
            eval_basket(i, &baskets[i], store, cfg, &mut acc);
        }
        acc
    });
    let mut total = BasketAcc::default();
    for p in &parts {
        total.merge(p);
    }
    total
}

pub fn within_basket_eval(baskets: &[Vec<u32>], store: &EmbeddingStore, cfg: &WithinBasketConfig, threads: usize) -> EvalReport {
    within_basket_acc(baskets, store, cfg, threads).report(cfg, "within_basket_")
}

pub fn cold_basket_eval(
    baskets: &[Vec<u32>],
    is_cold: &[bool],
    store: &EmbeddingStore,
    cfg: &WithinBasketConfig,
    threads: usize,
) -> EvalReport {
    let warm: Vec<u32> = (0..is_cold.len() as u32).filter(|&i| !is_cold[i as usize]).collect();
    let parts = map_chunks(baskets.len(), threads, |r| {
        let mut acc = BasketAcc::default();
        for i in r {
            eval_cold_basket(i, &baskets[i], is_cold, &warm, store, cfg, &mut acc);
        }
        acc
    });
    let mut total = BasketAcc::default();
    for p in &parts {
        total.merge(p);
    }
    let mut r = total.report(cfg, "cold_");
    r.notes.clear();
    r.note(
        "cold_protocol",
        format!(
            "cold basket items as context; each warm basket item held out; {} uniform warm negatives outside the basket; seed {}",
            cfg.negatives, cfg.seed
        ),
    );
    r
}

pub fn next_purchase_eval(
    queries: &[NextPurchaseQuery],
    store: &EmbeddingStore,
    mode: RankMode,
    ks: &[usize],
    threads: usize,
) -> Result<EvalReport, RankError> {
    let parts = map_chunks(queries.len(), threads, |r| -> Result<NextPurchaseAcc, RankError> {
        let mut acc = NextPurchaseAcc::default();
        for q in &queries[r] {
            acc.add(&next_purchase_query_metrics(q, store, mode, ks, None)?);
        }
        Ok(acc)
    });
    let mut total = NextPurchaseAcc::default();
    for p in parts {
        total.merge(&p?);
    }
    Ok(total.report(ks, "next_purchase_"))
}
