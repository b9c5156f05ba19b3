//! Run manifest and checkpoint sidecars.
//!
//! File paths inside a manifest are relative to the manifest's directory,
//! so a run directory can be moved as a whole.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::Task;
use super::trainer::Checkpoint;
use super::ExperimentError;
use crate::lights::LightMode;
use crate::models::{Family, ModelSpec};
use crate::nn::ParamStore;
use crate::panel::{Normalizer, SplitPolicy};
use crate::report::{ReportFormat, ResultRow};
use crate::training::{CvConfig, EpochRecord, GridPoint, PointResult};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointRole {
    /// Best single fold model of the winning grid point.
    BestValid,
    /// Winning grid point retrained on every training sample.
    Final,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointEntry {
    pub role: CheckpointRole,
    pub params: String,
    pub meta: String,
    pub train_count: usize,
    /// Held-out fold of a best-valid checkpoint.
    pub fold: Option<usize>,
    pub seed: u64,
}

/// JSON written next to each parameter file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub spec: ModelSpec,
    pub point: GridPoint,
    pub schema_fingerprint: String,
    pub normalizer: Normalizer,
    pub train_count: usize,
    pub seed: u64,
    pub curve: Vec<EpochRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub task: Task,
    pub family: Family,
    pub dataset_label: String,
    pub period_label: String,
    pub light_mode: LightMode,
    pub seq_len: Option<usize>,
    pub split: SplitPolicy,
    pub schema_fingerprint: String,
    pub cv: CvConfig,
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    /// Training-sample indices of each fold.
    pub folds: Vec<Vec<usize>>,
    pub fold_seeds: Vec<u64>,
    pub final_seed: u64,
    pub grid: Vec<PointResult>,
    pub winner: usize,
    pub best_fold: usize,
    pub best_valid_loss: f64,
    pub checkpoints: Vec<CheckpointEntry>,
    pub results: Vec<ResultRow>,
    pub formats: Vec<ReportFormat>,
    pub timestamp: bool,
    pub reports: Vec<String>,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ExperimentError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::Io(path.display().to_string(), e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn checkpoint(&self, role: CheckpointRole) -> Option<&CheckpointEntry> {
        self.checkpoints.iter().find(|c| c.role == role)
    }
}

pub(crate) fn write_json(path: &Path, value: &impl Serialize) -> Result<(), ExperimentError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| ExperimentError::Io(path.display().to_string(), e))
}

pub(crate) fn save_checkpoint(
    dir: &Path,
    role: CheckpointRole,
    ckpt: &Checkpoint,
    meta: &CheckpointMeta,
    fold: Option<usize>,
) -> Result<CheckpointEntry, ExperimentError> {
    let stem = match role {
        CheckpointRole::BestValid => "best_valid",
        CheckpointRole::Final => "final",
    };
    let params = format!("{stem}.nnps");
    let meta_name = format!("{stem}.json");
    ckpt.params.save(&dir.join(&params))?;
    write_json(&dir.join(&meta_name), meta)?;
    Ok(CheckpointEntry {
        role,
        params,
        meta: meta_name,
        train_count: ckpt.train_count,
        fold,
        seed: meta.seed,
    })
}

/// Reads a checkpoint listed in the manifest at `manifest_path`.
pub fn load_checkpoint(
    manifest_path: impl AsRef<Path>,
    entry: &CheckpointEntry,
) -> Result<(Checkpoint, CheckpointMeta), ExperimentError> {
    let dir = manifest_path.as_ref().parent().unwrap_or(Path::new("."));
    let meta_path = dir.join(&entry.meta);
    let text =
        std::fs::read_to_string(&meta_path).map_err(|e| ExperimentError::Io(meta_path.display().to_string(), e))?;
    let meta: CheckpointMeta = serde_json::from_str(&text)?;
    let params = ParamStore::load(&dir.join(&entry.params))?;
    let ckpt = Checkpoint {
        spec: meta.spec.clone(),
        point: meta.point.clone(),
        params,
        train_count: meta.train_count,
        curve: meta.curve.clone(),
    };
    Ok((ckpt, meta))
}
