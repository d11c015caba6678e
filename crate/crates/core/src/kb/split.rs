//! Seeded, platform-independent splitting.
//!
//! Shuffling is Fisher–Yates driven by SplitMix64: for `i` from `n-1` down to
//! `1`, swap positions `i` and `next_u64() % (i + 1)`. Any implementation of
//! SplitMix64 seeded with the same value reproduces the same permutation.

use rand::RngCore;
use rand_xoshiro::rand_core::SeedableRng;
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};

use super::{PairStore, TripleStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
    /// Fraction of cross-view links kept for training.
    pub link_train: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: 0.85,
            valid: 0.05,
            test: 0.10,
            link_train: 0.6,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, f) in [
            ("train", self.train),
            ("valid", self.valid),
            ("test", self.test),
        ] {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "{name} fraction must lie in (0, 1], got {f}"
                )));
            }
        }
        let sum = self.train + self.valid + self.test;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "triple split fractions must sum to 1, got {sum}"
            )));
        }
        check_link_fraction(self.link_train)
    }
}

fn check_link_fraction(nu: f64) -> Result<()> {
    if nu > 0.0 && nu < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "link train fraction must lie in (0, 1), got {nu}"
        )))
    }
}

/// Permutation of `0..n` determined by `seed`.
pub fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = SplitMix64::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        idx.swap(i, j);
    }
    idx
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripleSplit {
    pub train: TripleStore,
    pub valid: TripleStore,
    pub test: TripleStore,
}

/// Partitions `store` with `valid = floor(f_v n)`, `test = floor(f_t n)` and
/// the remainder in train. Each part keeps the input order of its triples.
pub fn split_triples(store: &TripleStore, spec: &SplitSpec) -> Result<TripleSplit> {
    spec.validate()?;
    if store.is_empty() {
        return Err(Error::Empty("cannot split an empty triple store".into()));
    }
    let n = store.len();
    let n_valid = (spec.valid * n as f64).floor() as usize;
    let n_test = (spec.test * n as f64).floor() as usize;
    let order = shuffled_indices(n, spec.seed);

    // 0 = train, 1 = valid, 2 = test
    let mut part = vec![0u8; n];
    for &i in &order[..n_valid] {
        part[i] = 1;
    }
    for &i in &order[n_valid..n_valid + n_test] {
        part[i] = 2;
    }
    let mut out = TripleSplit {
        train: TripleStore::new(),
        valid: TripleStore::new(),
        test: TripleStore::new(),
    };
    for (t, p) in store.iter().zip(&part) {
        match p {
            1 => out.valid.insert(*t),
            2 => out.test.insert(*t),
            _ => out.train.insert(*t),
        };
    }
    Ok(out)
}

/// Partitions links into `(train, test)` with `|train| = round(nu * |links|)`.
pub fn split_links(store: &PairStore, nu: f64, seed: u64) -> Result<(PairStore, PairStore)> {
    check_link_fraction(nu)?;
    let n = store.len();
    let n_train = (nu * n as f64).round() as usize;
    let order = shuffled_indices(n, seed);
    let mut in_train = vec![false; n];
    for &i in &order[..n_train] {
        in_train[i] = true;
    }
    let mut train = PairStore::new();
    let mut test = PairStore::new();
    for (&(l, r), keep) in store.iter().zip(&in_train) {
        if *keep {
            train.insert(l, r);
        } else {
            test.insert(l, r);
        }
    }
    Ok((train, test))
}
