use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::{derive, seeded, stream};

/// Fold index of every sample.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: Vec<usize>,
}

impl FoldPlan {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&i| self.assignments[i] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&i| self.assignments[i] != fold).collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        (0..self.k).map(|f| self.assignments.iter().filter(|&&a| a == f).count()).collect()
    }
}

/// Seeded random permutation with round-robin fold assignment, so fold
/// sizes differ by at most one.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 || n < k {
        return Err(Error::Config(format!("k-fold split needs n >= k >= 2, got n={n}, k={k}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded(derive(seed, stream::FOLD, 0)));
    let mut assignments = alloc::vec![0; n];
    for (pos, &sample) in order.iter().enumerate() {
        assignments[sample] = pos % k;
    }
    Ok(FoldPlan { k, assignments })
}
