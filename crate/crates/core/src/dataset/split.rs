use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::rng::rng_from_seed;
use crate::{Error, Result};

/// Inner split of the non-held-out data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// 80:20 train/validation (used for the ANN).
    TrainVal,
    /// 80:10:10 train/validation/test (used for the CNN and RNN).
    TrainValTest,
}

impl Scheme {
    /// Fractions of the remainder: train, val, inner test.
    pub fn fractions(self) -> [f64; 3] {
        match self {
            Scheme::TrainVal => [0.8, 0.2, 0.0],
            Scheme::TrainValTest => [0.8, 0.1, 0.1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub holdout_fraction: f64,
    pub scheme: Scheme,
    pub seed: u64,
    pub speaker_disjoint: bool,
}

impl SplitSpec {
    pub fn new(scheme: Scheme, seed: u64) -> Self {
        Self { holdout_fraction: 0.10, scheme, seed, speaker_disjoint: false }
    }
}

/// Disjoint, exhaustive index partitions. `inner_test` is empty for
/// [`Scheme::TrainVal`].
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Partitions {
    pub final_test: Vec<usize>,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub inner_test: Vec<usize>,
}

impl Partitions {
    fn parts_mut(&mut self) -> [&mut Vec<usize>; 4] {
        [&mut self.final_test, &mut self.train, &mut self.val, &mut self.inner_test]
    }

    pub fn parts(&self) -> [&[usize]; 4] {
        [&self.final_test, &self.train, &self.val, &self.inner_test]
    }

    /// Everything except the hold-out, in ascending order.
    pub fn development(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.train.iter().chain(&self.val).chain(&self.inner_test).copied().collect();
        all.sort_unstable();
        all
    }
}

fn targets(n: usize, spec: &SplitSpec) -> [usize; 4] {
    let holdout = libm::round(n as f64 * spec.holdout_fraction) as usize;
    let rest = n - holdout.min(n);
    let [ft, fv, _] = spec.scheme.fractions();
    let train = libm::round(rest as f64 * ft) as usize;
    let val = match spec.scheme {
        Scheme::TrainVal => rest - train,
        Scheme::TrainValTest => libm::round(rest as f64 * fv) as usize,
    };
    [holdout, train, val, rest - train - val]
}

/// Removes the hold-out fraction first, then splits the remainder per scheme.
///
/// `labels[i]` and `speakers[i]` describe entry `i`. With
/// `speaker_disjoint`, whole speakers are assigned per class so that no
/// speaker appears in two partitions.
pub fn split(labels: &[usize], speakers: &[&str], spec: &SplitSpec) -> Result<Partitions> {
    if labels.len() != speakers.len() {
        return Err(Error::InvalidArgument("labels and speakers differ in length".into()));
    }
    if !(0.0..1.0).contains(&spec.holdout_fraction) {
        return Err(Error::InvalidArgument(format!("holdout fraction {} out of [0, 1)", spec.holdout_fraction)));
    }
    let mut out = if spec.speaker_disjoint {
        split_by_speaker(labels, speakers, spec)?
    } else {
        split_by_segment(labels.len(), spec)
    };
    let wanted = if spec.scheme == Scheme::TrainValTest { 4 } else { 3 };
    let names = ["final_test", "train", "val", "inner_test"];
    for (i, p) in out.parts_mut().into_iter().enumerate() {
        p.sort_unstable();
        if i < wanted && p.is_empty() {
            return Err(Error::Split(format!("{} partition is empty ({} entries total)", names[i], labels.len())));
        }
    }
    Ok(out)
}

fn split_by_segment(n: usize, spec: &SplitSpec) -> Partitions {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from_seed(spec.seed));
    let t = targets(n, spec);
    let mut out = Partitions::default();
    let mut rest = &order[..];
    for (part, count) in out.parts_mut().into_iter().zip(t) {
        let (head, tail) = rest.split_at(count);
        part.extend_from_slice(head);
        rest = tail;
    }
    out
}

fn split_by_speaker(labels: &[usize], speakers: &[&str], spec: &SplitSpec) -> Result<Partitions> {
    let n_parts = if spec.scheme == Scheme::TrainValTest { 4 } else { 3 };
    let [ft, fv, fi] = spec.scheme.fractions();
    let h = spec.holdout_fraction;
    let fractions = [h, (1.0 - h) * ft, (1.0 - h) * fv, (1.0 - h) * fi];

    // speaker -> (class of first entry, entry indices); BTreeMap fixes the order.
    let mut groups: BTreeMap<&str, (usize, Vec<usize>)> = BTreeMap::new();
    for (i, (&label, &spk)) in labels.iter().zip(speakers).enumerate() {
        groups.entry(spk).or_insert_with(|| (label, Vec::new())).1.push(i);
    }
    let n_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut rng = rng_from_seed(spec.seed);
    let mut out = Partitions::default();
    for class in 0..n_classes {
        let mut members: Vec<&Vec<usize>> = groups.values().filter(|(c, _)| *c == class).map(|(_, v)| v).collect();
        if members.is_empty() {
            continue;
        }
        if members.len() < n_parts {
            return Err(Error::Split(format!(
                "speaker-disjoint split needs at least {n_parts} speakers per class; class {class} has {}",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        let total: usize = members.iter().map(|v| v.len()).sum();
        let mut filled = vec![0usize; n_parts];
        let parts = out.parts_mut();
        for (k, entries) in members.into_iter().enumerate() {
            let dest = if k < n_parts {
                k
            } else {
                // Largest remaining deficit against the target count.
                (0..n_parts)
                    .max_by(|&a, &b| {
                        let da = fractions[a] * total as f64 - filled[a] as f64;
                        let db = fractions[b] * total as f64 - filled[b] as f64;
                        da.partial_cmp(&db).unwrap_or(core::cmp::Ordering::Equal).then(b.cmp(&a))
                    })
                    .unwrap_or(1)
            };
            filled[dest] += entries.len();
            parts[dest].extend_from_slice(entries);
        }
    }
    Ok(out)
}
