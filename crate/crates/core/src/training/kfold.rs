use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TrainError;

pub const DEFAULT_FOLDS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvConfig {
    pub k: usize,
    /// Seed of the fold-assignment shuffle.
    pub seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_FOLDS,
            seed: 0,
        }
    }
}

/// Seeded shuffle of `0..n`, then round-robin assignment to `k` folds.
/// Indices inside each fold are sorted.
pub fn kfold_split(n: usize, cv: &CvConfig) -> Result<Vec<Vec<usize>>, TrainError> {
    if cv.k < 2 {
        return Err(TrainError::Config(format!("k must be >= 2, got {}", cv.k)));
    }
    if n < cv.k {
        return Err(TrainError::Config(format!("{n} samples cannot fill {} folds", cv.k)));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cv.seed));
    let mut folds = vec![Vec::with_capacity(n / cv.k + 1); cv.k];
    for (pos, idx) in order.into_iter().enumerate() {
        folds[pos % cv.k].push(idx);
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}
