//! Lock-free multi-threaded SGD over the shared embedding tables.
//!
//! Each epoch's observation sequence is dealt out round-robin: worker `w`
//! takes positions `w, w + T, w + 2T, ...`. Workers read and write the
//! atomic `f32` cells without synchronization, so runs with more than one
//! thread are not bit-reproducible.

use std::time::Instant;

use dualcart_core::train::{self, EpochStats, LossSum, TrainContext};
use dualcart_core::{EmbeddingStore, NegativeSampler, ObservationSet, TrainConfig, TrainError, Vocabulary};

/// Trains `store` in place with `config.threads` workers. One thread runs
/// the deterministic serial path.
pub fn train_into(
    store: &EmbeddingStore,
    observations: &ObservationSet,
    vocab: &Vocabulary,
    sampler: &NegativeSampler,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<(), TrainError> {
    config.validate()?;
    if config.threads == 1 {
        return train::train_into(store, observations, vocab, sampler, config, on_epoch);
    }
    if observations.is_empty() {
        return Err(TrainError::NoObservations);
    }
    let order = train::shuffled_order(observations.len(), config.seed);
    let ctx = TrainContext {
        store,
        observations,
        vocab,
        sampler,
        config,
        order: &order,
    };
    let threads = config.threads;
    let mut rngs: Vec<_> = (0..threads).map(|w| train::worker_rng(config.seed, w)).collect();
    for epoch in 0..config.epochs {
        let results: Vec<Result<LossSum, TrainError>> = std::thread::scope(|s| {
            let handles: Vec<_> = rngs
                .iter_mut()
                .enumerate()
                .map(|(w, rng)| {
                    let ctx = &ctx;
                    s.spawn(move || ctx.run_shard(epoch, w, threads, rng))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("training worker panicked")).collect()
        });
        let mut total = LossSum::default();
        for r in results {
            total.merge(&r?);
        }
        on_epoch(&EpochStats {
            epoch,
            mean_loss: total.mean(),
            steps: total.steps,
            final_learning_rate: train::learning_rate(
                ((epoch + 1) * order.len()) as u64 - 1,
                ctx.total_steps(),
                config.learning_rate,
            ),
        });
    }
    Ok(())
}

/// Result of a timed training run.
pub struct Trained {
    pub store: EmbeddingStore,
    pub epochs: Vec<EpochStats>,
    pub seconds: f64,
}

/// Initializes a store, builds the sampler and trains.
pub fn train(
    observations: &ObservationSet,
    vocab: &Vocabulary,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<Trained, TrainError> {
    config.validate()?;
    if observations.is_empty() {
        return Err(TrainError::NoObservations);
    }
    let store = EmbeddingStore::init(train::store_shape(vocab, config), config.seed)?;
    let sampler = NegativeSampler::from_observations(observations, vocab, config.neg_sample_floor)?;
    let mut epochs = Vec::with_capacity(config.epochs);
    let start = Instant::now();
    train_into(&store, observations, vocab, &sampler, config, |s| {
        epochs.push(*s);
        on_epoch(s);
    })?;
    Ok(Trained {
        store,
        epochs,
        seconds: start.elapsed().as_secs_f64(),
    })
}
