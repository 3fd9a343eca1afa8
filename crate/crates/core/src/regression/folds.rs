use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Partition of `0..n` into `k` folds.
///
/// Built by a seeded uniform shuffle followed by contiguous chunking, so fold
/// sizes differ by at most one and the plan is reproducible from the seed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    assignments: Vec<usize>,
    k: usize,
    seed: u64,
}

pub fn make_folds(n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("fold count must be at least 2, got {k}")));
    }
    if k > n {
        return Err(Error::InvalidArgument(format!(
            "cannot split {n} rows into {k} non-empty folds"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let base = n / k;
    let extra = n % k;
    let mut assignments = vec![0; n];
    let mut pos = 0;
    for fold in 0..k {
        let size = base + usize::from(fold < extra);
        for &row in &order[pos..pos + size] {
            assignments[row] = fold;
        }
        pos += size;
    }
    Ok(FoldPlan { assignments, k, seed })
}

impl FoldPlan {
    /// Plan from explicit assignments. Every fold in `0..k` must be used.
    pub fn from_assignments(assignments: Vec<usize>, k: usize, seed: u64) -> Result<Self> {
        let mut used = vec![false; k];
        for &f in &assignments {
            if f >= k {
                return Err(Error::InvalidArgument(format!("fold id {f} out of range for {k} folds")));
            }
            used[f] = true;
        }
        if used.iter().any(|u| !u) {
            return Err(Error::InvalidArgument("every fold must be non-empty".into()));
        }
        Ok(FoldPlan { assignments, k, seed })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n(&self) -> usize {
        self.assignments.len()
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn fold_of(&self, row: usize) -> usize {
        self.assignments[row]
    }

    pub fn test_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.assignments[i] == fold).collect()
    }

    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.assignments[i] != fold).collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignments {
            sizes[f] += 1;
        }
        sizes
    }

    /// The plan seen through a row permutation: new row `i` is old row
    /// `perm[i]` and keeps that row's fold.
    pub fn permuted(&self, perm: &[usize]) -> FoldPlan {
        FoldPlan {
            assignments: perm.iter().map(|&old| self.assignments[old]).collect(),
            k: self.k,
            seed: self.seed,
        }
    }
}
