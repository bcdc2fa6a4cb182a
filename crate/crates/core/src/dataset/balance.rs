use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::rng::rng_from_seed;
use crate::{Error, Result};

/// Class-balancing strategy applied to a training partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    None,
    Oversample,
    Undersample,
}

impl Sampling {
    pub const ALL: [Sampling; 3] = [Sampling::None, Sampling::Oversample, Sampling::Undersample];

    pub fn name(self) -> &'static str {
        match self {
            Sampling::None => "none",
            Sampling::Oversample => "oversample",
            Sampling::Undersample => "undersample",
        }
    }
}

impl core::fmt::Display for Sampling {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

impl core::str::FromStr for Sampling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Sampling::None),
            "oversample" | "over" => Ok(Sampling::Oversample),
            "undersample" | "under" => Ok(Sampling::Undersample),
            other => Err(Error::InvalidArgument(alloc::format!("unknown sampling '{other}'"))),
        }
    }
}

/// Per-class counts of the indexed entries; length is `max label + 1`.
pub fn class_counts(indices: &[usize], labels: &[usize]) -> Vec<usize> {
    let mut counts = Vec::new();
    for &i in indices {
        let l = labels[i];
        if counts.len() <= l {
            counts.resize(l + 1, 0);
        }
        counts[l] += 1;
    }
    counts
}

/// Members of each class, in input order.
fn by_class(indices: &[usize], labels: &[usize]) -> Result<Vec<Vec<usize>>> {
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); class_counts(indices, labels).len()];
    for &i in indices {
        groups[labels[i]].push(i);
    }
    let present = groups.iter().filter(|g| !g.is_empty()).count();
    if present < 2 {
        return Err(Error::SingleClass(present));
    }
    Ok(groups)
}

/// Duplicates minority-class entries, drawn uniformly with replacement, until
/// every class matches the majority count. Returns the input followed by the
/// duplicates.
pub fn oversample(indices: &[usize], labels: &[usize], seed: u64) -> Result<Vec<usize>> {
    let groups = by_class(indices, labels)?;
    let target = groups.iter().map(Vec::len).max().unwrap_or(0);
    let mut rng = rng_from_seed(seed);
    let mut out = indices.to_vec();
    for g in groups.iter().filter(|g| !g.is_empty()) {
        for _ in g.len()..target {
            out.push(g[rng.random_range(0..g.len())]);
        }
    }
    Ok(out)
}

/// Reduces every class to the minority count by sampling without
/// replacement. Surviving entries keep their input order.
pub fn undersample(indices: &[usize], labels: &[usize], seed: u64) -> Result<Vec<usize>> {
    let groups = by_class(indices, labels)?;
    let target = groups.iter().filter(|g| !g.is_empty()).map(Vec::len).min().unwrap_or(0);
    let mut rng = rng_from_seed(seed);
    let mut keep = alloc::collections::BTreeSet::new();
    for g in groups.iter().filter(|g| !g.is_empty()) {
        if g.len() == target {
            keep.extend(g.iter().copied());
        } else {
            keep.extend(rand::seq::index::sample(&mut rng, g.len(), target).into_iter().map(|k| g[k]));
        }
    }
    Ok(indices.iter().copied().filter(|i| keep.contains(i)).collect())
}

pub fn balance(indices: &[usize], labels: &[usize], sampling: Sampling, seed: u64) -> Result<Vec<usize>> {
    match sampling {
        Sampling::None => Ok(indices.to_vec()),
        Sampling::Oversample => oversample(indices, labels, seed),
        Sampling::Undersample => undersample(indices, labels, seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeSet;
    use proptest::prelude::*;

    fn labels_for(counts: [usize; 2]) -> Vec<usize> {
        let mut l = vec![0; counts[0]];
        l.extend(vec![1; counts[1]]);
        l
    }

    #[test]
    fn large_imbalanced_counts() {
        let labels = labels_for([39_083, 45_340]);
        let idx: Vec<usize> = (0..labels.len()).collect();
        let over = oversample(&idx, &labels, 1).unwrap();
        assert_eq!(class_counts(&over, &labels), vec![45_340, 45_340]);
        let under = undersample(&idx, &labels, 1).unwrap();
        assert_eq!(class_counts(&under, &labels), vec![39_083, 39_083]);
    }

    #[test]
    fn balanced_input_unchanged() {
        let labels = labels_for([5, 5]);
        let idx: Vec<usize> = (0..10).collect();
        assert_eq!(oversample(&idx, &labels, 3).unwrap(), idx);
        assert_eq!(undersample(&idx, &labels, 3).unwrap(), idx);
    }

    #[test]
    fn oversample_matches_reference_draw() {
        let labels = labels_for([3, 7]);
        let idx: Vec<usize> = (0..10).collect();
        let seed = 42;
        let out = oversample(&idx, &labels, seed).unwrap();
        let mut rng = rng_from_seed(seed);
        let expected_dups: Vec<usize> = (0..4).map(|_| rng.random_range(0..3usize)).collect();
        assert_eq!(&out[..10], &idx[..]);
        assert_eq!(&out[10..], &expected_dups[..]);
        assert!(out[10..].iter().all(|&i| i < 3));
    }

    #[test]
    fn undersample_subset_is_distinct() {
        let labels = labels_for([10, 4]);
        let idx: Vec<usize> = (0..14).collect();
        let out = undersample(&idx, &labels, 9).unwrap();
        let majority: Vec<usize> = out.iter().copied().filter(|&i| labels[i] == 0).collect();
        assert_eq!(majority.len(), 4);
        assert_eq!(majority.iter().collect::<BTreeSet<_>>().len(), 4);
        assert!(out.iter().filter(|&&i| labels[i] == 1).count() == 4);
    }

    #[test]
    fn single_class_is_error() {
        let labels = vec![1; 5];
        let idx: Vec<usize> = (0..5).collect();
        assert_eq!(oversample(&idx, &labels, 0), Err(Error::SingleClass(1)));
        assert_eq!(undersample(&idx, &labels, 0), Err(Error::SingleClass(1)));
        assert_eq!(balance(&idx, &labels, Sampling::None, 0).unwrap(), idx);
    }

    proptest! {
        #[test]
        fn counts_equalize(a in 1usize..300, b in 1usize..300, seed: u64) {
            let labels = labels_for([a, b]);
            let idx: Vec<usize> = (0..labels.len()).collect();
            let over = oversample(&idx, &labels, seed).unwrap();
            prop_assert_eq!(class_counts(&over, &labels), vec![a.max(b); 2]);
            let under = undersample(&idx, &labels, seed).unwrap();
            prop_assert_eq!(class_counts(&under, &labels), vec![a.min(b); 2]);
            prop_assert_eq!(over, oversample(&idx, &labels, seed).unwrap());
        }
    }
}
