//! Knowledge-aware dual item embeddings for complementary-product recommendation.
//!
//! The crate is `no_std` (it needs `alloc`). Everything that touches files,
//! threads or the command line lives in the `dualcart` companion crate.
//!
//! Every item carries two vectors: an *item-in* vector used when the item is
//! part of a purchase context, and an *item-out* vector used when it is the
//! candidate next purchase. Their inner product scores how strongly the
//! candidate complements the context, which makes the relation asymmetric.
//! Users and the context tokens of items and users get their own tables; the
//! token tables tie contextually similar items together and make cold-start
//! inference possible.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod coldstart;
pub mod corpus;
pub mod eval;
pub mod math;
pub mod metrics;
pub mod probe;
pub mod rank;
pub mod sampler;
pub mod store;
pub mod synth;
pub mod train;
pub mod vocab;

pub use coldstart::{infer, ColdStartError, ColdStartParams, NegativeSource};
pub use corpus::{
    build_observations, split, Event, Observation, ObservationSet, ObsView, SequenceMode, SplitMode,
    SplitSpec, Splits,
};
pub use eval::{EvalReport, WithinBasketConfig};
pub use rank::{Query, RankError, RankedList};
pub use sampler::{SamplerError, SamplingTable};
pub use store::{EmbeddingStore, ItemUserTable, Matrix, StoreError};
pub use train::{LossBreakdown, NegativeSampler, Negatives, TrainConfig, TrainError};
pub use vocab::{Interner, TokenLists, Vocabulary};
