//! Train / public-test / private-test partition of the video pool.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::Subset;

#[derive(Debug, Error, PartialEq)]
pub enum SplitError {
    #[error("pool of {0} videos is too small to split (need at least 3)")]
    TooSmall(usize),
    #[error("duplicate video id {0}")]
    Duplicate(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub seed: u64,
    pub train: Vec<String>,
    pub public_test: Vec<String>,
    pub private_test: Vec<String>,
}

impl DatasetSplit {
    pub fn subset_of(&self, video_id: &str) -> Option<Subset> {
        let has = |v: &[String]| v.iter().any(|id| id == video_id);
        if has(&self.train) {
            Some(Subset::Train)
        } else if has(&self.public_test) {
            Some(Subset::PublicTest)
        } else if has(&self.private_test) {
            Some(Subset::PrivateTest)
        } else {
            None
        }
    }

    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.public_test.len(), self.private_test.len())
    }
}

/// `(train, public, private)` sizes: `round(2n/3)`, then `round(0.3·rest)`,
/// the remainder private. Halves round up.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let train = (2 * n + 1) / 3;
    let rest = n - train;
    let public = (6 * rest + 10) / 20;
    (train, public, rest - public)
}

/// Seeded uniform shuffle of the sorted pool, then partition. The result
/// depends only on the id set and the seed.
pub fn split_dataset(ids: &[String], seed: u64) -> Result<DatasetSplit, SplitError> {
    if ids.len() < 3 {
        return Err(SplitError::TooSmall(ids.len()));
    }
    let mut seen = BTreeSet::new();
    if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
        return Err(SplitError::Duplicate(dup.clone()));
    }
    let mut pool: Vec<String> = seen.into_iter().map(str::to_string).collect();
    pool.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (train, public, _) = split_sizes(pool.len());
    let private_test = pool.split_off(train + public);
    let public_test = pool.split_off(train);
    Ok(DatasetSplit { seed, train: pool, public_test, private_test })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("video_{i:04}")).collect()
    }

    #[test]
    fn sizes() {
        assert_eq!(split_sizes(1500), (1000, 150, 350));
        assert_eq!(split_sizes(15), (10, 2, 3));
        assert_eq!(split_sizes(3), (2, 0, 1));
        assert_eq!(split_dataset(&ids(1500), 9).unwrap().sizes(), (1000, 150, 350));
    }

    #[test]
    fn deterministic_and_order_free() {
        let a = split_dataset(&ids(15), 42).unwrap();
        let mut reversed = ids(15);
        reversed.reverse();
        assert_eq!(a, split_dataset(&reversed, 42).unwrap());
        assert_ne!(a, split_dataset(&ids(15), 43).unwrap());
        assert_eq!(a.subset_of(&a.public_test[0]), Some(Subset::PublicTest));
        assert_eq!(a.subset_of("missing"), None);
    }

    #[test]
    fn errors() {
        assert_eq!(split_dataset(&ids(2), 0), Err(SplitError::TooSmall(2)));
        let mut dup = ids(5);
        dup.push("video_0001".into());
        assert_eq!(split_dataset(&dup, 0), Err(SplitError::Duplicate("video_0001".into())));
    }

    proptest! {
        #[test]
        fn partition_is_disjoint_and_exhaustive(n in 3usize..300, seed in any::<u64>()) {
            let pool = ids(n);
            let s = split_dataset(&pool, seed).unwrap();
            prop_assert_eq!(s.sizes(), split_sizes(n));
            let mut all: Vec<String> = s.train.iter().chain(&s.public_test).chain(&s.private_test).cloned().collect();
            all.sort();
            prop_assert_eq!(all, pool);
        }
    }
}
