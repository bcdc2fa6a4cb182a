//! Core of a spoken native-language identification pipeline.
//!
//! Everything here is pure computation over in-memory buffers and needs only
//! `alloc`: resampling and fixed-duration segmentation, MFCC extraction,
//! dataset splitting/balancing/folding, a small neural-network stack with
//! hand-derived gradients (dense, conv2d, max-pool, dropout, LSTM), the three
//! classifier families built on it, and a synthetic two-class corpus
//! generator. File formats, WAV decoding, the experiment runner and the CLI
//! live in the `nli` companion crate.

#![no_std]
#![warn(rust_2018_idioms)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod audio;
pub mod dataset;
mod error;
pub mod features;
pub mod models;
pub mod nn;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
