//! Surface EMG gesture recognition.
//!
//! The crate covers the whole offline pipeline: raw multichannel recordings are
//! band-pass and notch filtered ([`dsp`]), cut into overlapping windows
//! ([`dataset`]), turned into 336-dimensional feature vectors ([`features`]) and
//! classified with a histogram gradient-boosted tree model trained on a
//! class-weighted softmax cross-entropy ([`gbdt`]). Models can be bagged over
//! stratified folds ([`ensemble`]), tuned with a density-ratio sampler
//! ([`hpo`]) and warm-started on a new population ([`transfer`]).
//!
//! [`pipeline`] wires the stages together the same way the `semg` binary does.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dataset;
pub mod dsp;
pub mod ensemble;
mod error;
pub mod features;
pub mod gbdt;
pub mod hpo;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod report;
pub mod transfer;

pub use error::{Error, Result};

/// Number of electrode channels in a recording.
pub const N_CHANNELS: usize = 12;

/// Largest gesture label; label 0 is rest.
pub const MAX_GESTURE: u8 = 18;
