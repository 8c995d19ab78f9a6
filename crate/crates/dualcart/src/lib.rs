//! Std-side companion to `dualcart-core`: input parsing, binary formats,
//! multi-threaded training and evaluation, and the command pipeline.

pub mod bin_io;
pub mod cache;
pub mod config;
pub mod hogwild;
pub mod ingest;
pub mod pool;
pub mod snapshot;
pub mod synth_io;
pub mod instacart;
pub mod pipeline;
