//! Losses, the training loop, k-fold splitting and grid search.

pub mod grid;
pub mod kfold;
pub mod loss;
pub mod optim;
pub mod train;

use thiserror::Error;

use crate::models::ModelError;

pub use grid::{grid_search, CvRun, FoldTrainer, GridPoint, GridSpace, PointResult};
pub use kfold::{kfold_split, CvConfig};
pub use loss::{
    batch_weighted_loss, validation_loss, weighted_multivariate_loss, weighted_multivariate_loss_grad, LossConfig,
    LossKind, ValidationMode,
};
pub use optim::{Optimizer, OptimizerKind};
pub use train::{train_network, EpochRecord, TrainConfig, TrainOutcome};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("config: {0}")]
    Config(String),
    #[error("shape: {0}")]
    Shape(String),
    #[error("training diverged (last finite epoch: {last_finite_epoch:?})")]
    Diverged { last_finite_epoch: Option<usize> },
    #[error("every grid point diverged")]
    AllDiverged,
}

impl From<crate::nn::GraphError> for TrainError {
    fn from(e: crate::nn::GraphError) -> Self {
        TrainError::Model(e.into())
    }
}

/// SplitMix64 finaliser over `(base, stream)`; gives well-separated
/// per-fold and per-purpose seeds from one base seed.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
