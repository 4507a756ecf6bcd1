//! Train/validation/test splits by document or by sender.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::synth::LabeledPair;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ratios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for Ratios {
    fn default() -> Self {
        Ratios { train: 0.7, validation: 0.1, test: 0.2 }
    }
}

impl Ratios {
    fn validate(&self) -> Result<()> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|r| !(0.0..=1.0).contains(r)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config("split ratios must be in [0,1] and sum to 1".into()));
        }
        Ok(())
    }

    /// Sizes of the three parts for `n` units; test absorbs the rounding.
    pub fn sizes(&self, n: usize) -> [usize; 3] {
        let train = ((n as f64) * self.train).round() as usize;
        let val = (((n as f64) * self.validation).round() as usize).min(n - train.min(n));
        let train = train.min(n);
        [train, val, n - train - val]
    }
}

/// Indices into the original collection, each part in ascending order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitIndices {
    pub fn select<'a, T>(&self, items: &'a [T]) -> [Vec<&'a T>; 3] {
        [&self.train, &self.validation, &self.test].map(|ix| ix.iter().map(|&i| &items[i]).collect())
    }
}

pub fn split_by_document(n: usize, ratios: Ratios, seed: u64) -> Result<SplitIndices> {
    ratios.validate()?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let [a, b, _] = ratios.sizes(n);
    let part = |r: std::ops::Range<usize>| {
        let mut v = order[r].to_vec();
        v.sort_unstable();
        v
    };
    Ok(SplitIndices { train: part(0..a), validation: part(a..a + b), test: part(a + b..n) })
}

/// Splits so that all items of one group land in the same part. Groups are
/// divided by count with the given ratios.
pub fn split_by_group(keys: &[&str], ratios: Ratios, seed: u64) -> Result<SplitIndices> {
    ratios.validate()?;
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, k) in keys.iter().enumerate() {
        groups.entry(k).or_default().push(i);
    }
    let mut names: Vec<&str> = groups.keys().copied().collect();
    names.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let [a, b, _] = ratios.sizes(names.len());
    let collect = |part: &[&str]| {
        let mut v: Vec<usize> = part.iter().flat_map(|n| groups[n].iter().copied()).collect();
        v.sort_unstable();
        v
    };
    Ok(SplitIndices { train: collect(&names[..a]), validation: collect(&names[a..a + b]), test: collect(&names[a + b..]) })
}

pub fn split_pairs_by_document(pairs: &[LabeledPair], ratios: Ratios, seed: u64) -> Result<SplitIndices> {
    split_by_document(pairs.len(), ratios, seed)
}

pub fn split_pairs_by_sender(pairs: &[LabeledPair], ratios: Ratios, seed: u64) -> Result<SplitIndices> {
    let keys: Vec<&str> = pairs.iter().map(|p| p.doc.sender_id()).collect();
    split_by_group(&keys, ratios, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hundred_documents_split_70_10_20() {
        let s = split_by_document(100, Ratios::default(), 1).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (70, 10, 20));
    }

    #[test]
    fn ten_senders_split_7_1_2() {
        let keys: Vec<String> = (0..100).map(|i| format!("s{}", i % 10)).collect();
        let refs: Vec<&str> = keys.iter().map(String::as_str).collect();
        let s = split_by_group(&refs, Ratios::default(), 3).unwrap();
        let senders = |ix: &[usize]| {
            let mut v: Vec<&str> = ix.iter().map(|&i| refs[i]).collect();
            v.sort_unstable();
            v.dedup();
            v.len()
        };
        assert_eq!((senders(&s.train), senders(&s.validation), senders(&s.test)), (7, 1, 2));
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (70, 10, 20));
    }

    #[test]
    fn bad_ratios_rejected() {
        assert!(split_by_document(10, Ratios { train: 0.5, validation: 0.1, test: 0.1 }, 0).is_err());
    }

    proptest! {
        #[test]
        fn document_split_partitions(n in 0usize..300, seed in any::<u64>()) {
            let s = split_by_document(n, Ratios::default(), seed).unwrap();
            let mut all: Vec<usize> = s.train.iter().chain(&s.validation).chain(&s.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }

        #[test]
        fn groups_never_straddle(groups in proptest::collection::vec(0u8..15, 1..200), seed in any::<u64>()) {
            let keys: Vec<String> = groups.iter().map(|g| g.to_string()).collect();
            let refs: Vec<&str> = keys.iter().map(String::as_str).collect();
            let s = split_by_group(&refs, Ratios::default(), seed).unwrap();
            let part_of = |i: usize| if s.train.contains(&i) { 0 } else if s.validation.contains(&i) { 1 } else { 2 };
            for i in 0..refs.len() {
                for j in 0..refs.len() {
                    if refs[i] == refs[j] {
                        prop_assert_eq!(part_of(i), part_of(j));
                    }
                }
            }
        }
    }
}
