//! Config-driven experiment runs: data preparation, k-fold grid search,
//! checkpoints, manifest and reports.

pub mod config;
pub mod data;
pub mod manifest;
pub mod run;
pub mod trainer;

use thiserror::Error;

pub use config::{ExperimentConfig, ModelBase, Task, DATA_ROOT_ENV};
pub use data::{prepare, Prepared, SampleSet};
pub use manifest::{load_checkpoint, CheckpointEntry, CheckpointMeta, Manifest};
pub use run::{rerender_reports, run_experiment, RunOutcome};
pub use trainer::{model_spec, predict, Checkpoint, FamilyTrainer, Shapes};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error(transparent)]
    Panel(#[from] crate::panel::PanelError),
    #[error(transparent)]
    Lights(#[from] crate::lights::LightsError),
    #[error(transparent)]
    Embedding(#[from] crate::embeddings::EmbeddingError),
    #[error(transparent)]
    Train(#[from] crate::training::TrainError),
    #[error(transparent)]
    Model(#[from] crate::models::ModelError),
    #[error(transparent)]
    Report(#[from] crate::report::ReportError),
    #[error(transparent)]
    Store(#[from] crate::nn::StoreError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl ExperimentError {
    /// Errors caused by the configuration rather than the data or the run.
    pub fn is_config(&self) -> bool {
        matches!(self, ExperimentError::Config(_))
    }
}
