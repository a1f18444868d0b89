//! Deterministic train/validation/test splitting.
//!
//! Sizes follow a floor allocation: each part gets `floor(n * share)` rows
//! and the leftover rows (at most two) go to train first, then validation.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::RngSeed;

/// Disjoint index sets partitioning `0..n-1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitIndices {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.validation.len(), self.test.len())
    }
}

/// Allocate `n` rows to (train, validation, test) for a nonnegative ratio.
/// Pure arithmetic; no shuffling.
pub fn allocate_sizes(n: usize, ratio: (f64, f64, f64)) -> Result<(usize, usize, usize)> {
    let (a, b, c) = ratio;
    if !(a >= 0.0 && b >= 0.0 && c >= 0.0) {
        return Err(Error::Config(
            "split ratio components must be nonnegative".into(),
        ));
    }
    let total = a + b + c;
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::Config(
            "split ratio must sum to a positive value".into(),
        ));
    }
    let nonzero_parts = [a, b, c].iter().filter(|&&p| p > 0.0).count();
    if n < nonzero_parts {
        return Err(Error::InfeasibleSplit(format!(
            "{n} rows cannot populate {nonzero_parts} nonzero split parts"
        )));
    }
    let nf = n as f64;
    let mut train = (nf * a / total).floor() as usize;
    let mut val = (nf * b / total).floor() as usize;
    let test = (nf * c / total).floor() as usize;
    let mut leftover = n - (train + val + test);
    // Leftover rows (at most two for a three-way split) go to train, then
    // validation.
    if leftover > 0 {
        train += 1;
        leftover -= 1;
    }
    if leftover > 0 {
        val += 1;
        leftover -= 1;
    }
    train += leftover; // cannot happen for three parts, kept for safety
    Ok((train, val, test))
}

/// Randomly partition `0..n-1` into train/validation/test with the floor
/// allocation rule. Deterministic under `seed`.
pub fn split(n: usize, ratio: (f64, f64, f64), seed: RngSeed) -> Result<SplitIndices> {
    let (n_train, n_val, n_test) = allocate_sizes(n, ratio)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed.rng());
    let train = order[..n_train].to_vec();
    let validation = order[n_train..n_train + n_val].to_vec();
    let test = order[n_train + n_val..n_train + n_val + n_test].to_vec();
    Ok(SplitIndices {
        train,
        validation,
        test,
    })
}
