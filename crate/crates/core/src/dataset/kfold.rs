use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::balance::class_counts;
use crate::rng::rng_from_seed;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

/// Stratified k-fold over `indices`.
///
/// Each class is shuffled and dealt round-robin into the folds, continuing
/// where the previous class stopped, so fold sizes differ by at most one and
/// each fold's per-class count is within one of `n_class / k`.
pub fn kfold(indices: &[usize], labels: &[usize], k: usize, seed: u64) -> Result<Vec<Fold>> {
    let counts = class_counts(indices, labels);
    let smallest = counts.iter().copied().filter(|&c| c > 0).min().unwrap_or(0);
    if k < 2 || k > smallest {
        return Err(Error::InvalidArgument(format!(
            "k = {k} must satisfy 2 <= k <= smallest class size ({smallest})"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut vals: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut next = 0;
    for class in 0..counts.len() {
        let mut members: Vec<usize> = indices.iter().copied().filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut rng);
        for i in members {
            vals[next].push(i);
            next = (next + 1) % k;
        }
    }
    Ok(vals
        .iter()
        .enumerate()
        .map(|(f, val)| {
            let mut val = val.clone();
            val.sort_unstable();
            let mut train: Vec<usize> = vals.iter().enumerate().filter(|(g, _)| *g != f).flat_map(|(_, v)| v.iter().copied()).collect();
            train.sort_unstable();
            Fold { train, val }
        })
        .collect())
}
