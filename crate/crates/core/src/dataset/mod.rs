//! Labeled feature datasets: the manifest, hold-out/inner splits, class
//! balancing and stratified k-fold.
//!
//! Split, balance and fold operate on index lists into a label array so the
//! (large) feature matrices are never copied until a training set is
//! materialized.

mod balance;
mod kfold;
mod manifest;
mod split;

pub use balance::{balance, class_counts, oversample, undersample, Sampling};
pub use kfold::{kfold, Fold};
pub use manifest::{entries_for_clip, Manifest, ManifestEntry, CLASS_NAMES};
pub use split::{split, Partitions, Scheme, SplitSpec};
