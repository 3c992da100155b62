//! Streaming sketches with learned predictions.
//!
//! The crate has two sketch families and the machinery to benchmark them:
//!
//! - [`freq`]: one-dimensional frequency estimation — Misra-Gries (with a
//!   generalized eviction threshold), CountMin, CountSketch, a truncated
//!   CountSketch variant, and learned wrappers that count a predicted heavy
//!   set exactly.
//! - [`fd`]: matrix streaming — Frequent Directions, a learned variant that
//!   splits each row between a predicted subspace and its complement, and a
//!   robust variant that falls back to the prediction-free sketch when the
//!   learned one misbehaves.
//! - [`oracle`]: prediction sources (perfect, partial, noisy,
//!   first-instance).
//! - [`datagen`]: Zipfian and adversarial instance generators.
//! - [`eval`]: weighted/unweighted error metrics and scaling-law fits.
//! - [`bench`]: the sweep harness behind the `lasketch` binary.
//! - [`io`]: file formats for streams, matrices, oracles and sketch
//!   snapshots.

#![allow(clippy::needless_range_loop)] // index loops mirror matrix coordinates

pub mod bench;
pub mod datagen;
pub mod error;
pub mod eval;
pub mod fd;
pub mod freq;
pub mod io;
pub mod linalg;
pub mod oracle;

pub use error::{Error, Result};

/// Element identifier for one-dimensional streams.
pub type ElementId = u64;
