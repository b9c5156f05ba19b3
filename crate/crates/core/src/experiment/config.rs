//! TOML experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ExperimentError;
use crate::lights::LightMode;
use crate::models::Family;
use crate::nn::Activation;
use crate::panel::{NormScope, SplitMode, SplitPolicy};
use crate::report::ReportFormat;
use crate::training::{CvConfig, GridSpace, TrainConfig};

/// Environment variable that, when set, anchors relative paths in a config.
pub const DATA_ROOT_ENV: &str = "GDPCAST_DATA_ROOT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// Same-period indicators predicting GDP growth.
    Regression,
    /// Past GDP growth predicting the next value.
    Autoregression,
    /// Past indicator vectors predicting the next vector.
    MultiIndicator,
}

impl Task {
    pub fn is_windowed(self) -> bool {
        !matches!(self, Task::Regression)
    }

    pub fn families(self) -> &'static [Family] {
        match self {
            Task::Regression => &[Family::Linear, Family::Mlp, Family::Rt],
            Task::Autoregression => &[Family::Linear, Family::Mlp, Family::Lstm],
            Task::MultiIndicator => &[Family::Linear, Family::Mlp, Family::Lstm, Family::Patch],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossSection {
    pub w_gdp: f64,
}

impl Default for LossSection {
    fn default() -> Self {
        Self { w_gdp: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearBase {
    pub ridge_eps: f64,
}

impl Default for LinearBase {
    fn default() -> Self {
        Self { ridge_eps: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpBase {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for MlpBase {
    fn default() -> Self {
        Self {
            hidden: vec![32, 32],
            activation: Activation::Relu,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LstmBase {
    pub hidden: usize,
    pub layers: usize,
}

impl Default for LstmBase {
    fn default() -> Self {
        Self { hidden: 16, layers: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PatchBase {
    pub patch_len: usize,
    pub stride: usize,
    pub width: usize,
    pub heads: usize,
    pub ff_width: usize,
    pub layers: usize,
}

impl Default for PatchBase {
    fn default() -> Self {
        Self {
            patch_len: 4,
            stride: 2,
            width: 16,
            heads: 2,
            ff_width: 32,
            layers: 1,
        }
    }
}

/// The embedding width comes from the embedding file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RtBase {
    pub proj_dim: usize,
    pub value_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_width: usize,
    pub max_tokens: usize,
}

impl Default for RtBase {
    fn default() -> Self {
        Self {
            proj_dim: 64,
            value_dim: 16,
            layers: 2,
            heads: 4,
            ff_width: 160,
            max_tokens: crate::models::rt::DEFAULT_MAX_TOKENS,
        }
    }
}

/// Base architecture of the configured family, before grid overrides.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum ModelBase {
    Linear(LinearBase),
    Mlp(MlpBase),
    Lstm(LstmBase),
    Patch(PatchBase),
    Rt(RtBase),
}

impl ModelBase {
    fn from_table(family: Family, table: &toml::Table) -> Result<Self, ExperimentError> {
        let v = toml::Value::Table(table.clone());
        let bad = |e: toml::de::Error| ExperimentError::Config(format!("[model] for {family:?}: {e}"));
        Ok(match family {
            Family::Linear => ModelBase::Linear(v.try_into().map_err(bad)?),
            Family::Mlp => ModelBase::Mlp(v.try_into().map_err(bad)?),
            Family::Lstm => ModelBase::Lstm(v.try_into().map_err(bad)?),
            Family::Patch => ModelBase::Patch(v.try_into().map_err(bad)?),
            Family::Rt => ModelBase::Rt(v.try_into().map_err(bad)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    dataset: PathBuf,
    #[serde(default)]
    lights: Option<PathBuf>,
    #[serde(default)]
    embeddings: Option<PathBuf>,
    output_dir: PathBuf,
    #[serde(default)]
    dataset_label: Option<String>,
    period_label: String,
    #[serde(default)]
    split: Option<SplitMode>,
    /// Target column; defaults to the last column of the panel file.
    #[serde(default)]
    target: Option<String>,
    task: Task,
    family: Family,
    #[serde(default)]
    light_mode: LightMode,
    #[serde(default)]
    seq_len: Option<usize>,
    #[serde(default)]
    normalization: NormScope,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    timestamp: bool,
    #[serde(default = "default_formats")]
    formats: Vec<ReportFormat>,
    #[serde(default)]
    cv: CvConfig,
    #[serde(default)]
    train: TrainConfig,
    #[serde(default)]
    loss: LossSection,
    #[serde(default)]
    grid: GridSpace,
    #[serde(default)]
    model: toml::Table,
}

fn default_formats() -> Vec<ReportFormat> {
    vec![ReportFormat::Markdown, ReportFormat::Csv]
}

/// A parsed and validated experiment. Paths are resolved against
/// `$GDPCAST_DATA_ROOT` when set, otherwise against the config file's
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    pub lights: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Defaults to the panel frequency ("yearly" or "quarterly").
    pub dataset_label: Option<String>,
    pub period_label: String,
    pub split: SplitPolicy,
    pub target: Option<String>,
    pub task: Task,
    pub family: Family,
    pub light_mode: LightMode,
    pub seq_len: Option<usize>,
    pub normalization: NormScope,
    /// Base seed of the grid search. `train.seed` is ignored; each fit
    /// receives a seed derived from this one.
    pub seed: u64,
    pub timestamp: bool,
    pub formats: Vec<ReportFormat>,
    pub cv: CvConfig,
    pub train: TrainConfig,
    pub loss: LossSection,
    pub grid: GridSpace,
    pub model: ModelBase,
    /// Hex sha256 of the canonical (pre-resolution) config.
    pub hash: String,
}

fn resolve(path: PathBuf, root: &Path) -> PathBuf {
    if path.is_absolute() {
        path
    } else {
        root.join(path)
    }
}

impl ExperimentConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ExperimentError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::Io(path.display().to_string(), e))?;
        let root = match std::env::var_os(DATA_ROOT_ENV) {
            Some(r) if !r.is_empty() => PathBuf::from(r),
            _ => path.parent().map(Path::to_path_buf).unwrap_or_default(),
        };
        Self::parse(&text, &root)
    }

    pub fn parse(text: &str, root: &Path) -> Result<Self, ExperimentError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        // Hash the parsed form so comments and layout do not matter.
        let canonical = serde_json::to_vec(&raw)?;
        let hash = hex::encode(Sha256::digest(&canonical))[..16].to_string();
        let model = ModelBase::from_table(raw.family, &raw.model)?;
        let split = match raw.split {
            Some(mode) => SplitPolicy::explicit(mode),
            None => SplitPolicy::from_period_label(&raw.period_label),
        };
        let cfg = ExperimentConfig {
            dataset: resolve(raw.dataset, root),
            lights: raw.lights.map(|p| resolve(p, root)),
            embeddings: raw.embeddings.map(|p| resolve(p, root)),
            output_dir: resolve(raw.output_dir, root),
            dataset_label: raw.dataset_label,
            period_label: raw.period_label,
            split,
            target: raw.target,
            task: raw.task,
            family: raw.family,
            light_mode: raw.light_mode,
            seq_len: raw.seq_len,
            normalization: raw.normalization,
            seed: raw.seed,
            timestamp: raw.timestamp,
            formats: raw.formats,
            cv: raw.cv,
            train: raw.train,
            loss: raw.loss,
            grid: raw.grid,
            model,
            hash,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks that need no data. Data-dependent checks (model shapes for
    /// every grid point) run before any training in the pipeline.
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let err = |m: String| Err(ExperimentError::Config(m));
        if !self.task.families().contains(&self.family) {
            return err(format!(
                "family {:?} is not available for task {:?}",
                self.family, self.task
            ));
        }
        match (self.task.is_windowed(), self.seq_len) {
            (true, None) | (true, Some(0)) => return err("windowed tasks need seq_len >= 1".into()),
            (false, Some(_)) => return err("seq_len only applies to windowed tasks".into()),
            _ => {}
        }
        if self.light_mode != LightMode::None && self.lights.is_none() {
            return err(format!("light_mode {:?} needs a lights file", self.light_mode));
        }
        if self.family == Family::Rt && self.embeddings.is_none() {
            return err("the RT family needs an embeddings file".into());
        }
        if self.cv.k < 2 {
            return err(format!("cv.k must be >= 2, got {}", self.cv.k));
        }
        if self.formats.is_empty() {
            return err("at least one report format is required".into());
        }
        self.train
            .validate()
            .map_err(|e| ExperimentError::Config(e.to_string()))?;
        if !(self.loss.w_gdp > 0.0 && self.loss.w_gdp.is_finite()) {
            return err(format!("loss.w_gdp must be > 0, got {}", self.loss.w_gdp));
        }
        if self.split.derived_from_period_range {
            // nothing to reconcile
        } else if (self.period_label.trim() == "13-19") != (self.split.mode == SplitMode::LastYear) {
            return err(format!(
                "split {:?} contradicts period range {:?}: 13-19 holds out one year, other ranges two",
                self.split.mode, self.period_label
            ));
        }
        self.validate_grid()
    }

    fn validate_grid(&self) -> Result<(), ExperimentError> {
        let g = &self.grid;
        let used: [(&str, bool); 7] = [
            ("lr", !g.lr.is_empty()),
            ("width", !g.width.is_empty()),
            ("depth", !g.depth.is_empty()),
            ("dim", !g.dim.is_empty()),
            ("w_gdp", !g.w_gdp.is_empty()),
            ("patch_len", !g.patch_len.is_empty()),
            ("ridge_eps", !g.ridge_eps.is_empty()),
        ];
        let allowed: &[&str] = match self.family {
            Family::Linear => &["ridge_eps"],
            Family::Mlp | Family::Lstm => &["lr", "width", "depth", "w_gdp"],
            Family::Patch => &["lr", "width", "depth", "w_gdp", "patch_len"],
            Family::Rt => &["lr", "width", "depth", "dim"],
        };
        for (name, present) in used {
            if present && !allowed.contains(&name) {
                return Err(ExperimentError::Config(format!(
                    "grid axis {name} does not apply to family {:?}",
                    self.family
                )));
            }
        }
        if !g.w_gdp.is_empty() && self.task != Task::MultiIndicator {
            return Err(ExperimentError::Config(
                "grid axis w_gdp only applies to multi_indicator".into(),
            ));
        }
        let bad_f = |v: &f64| !(v.is_finite() && *v > 0.0);
        if g.lr.iter().any(bad_f) || g.w_gdp.iter().any(bad_f) {
            return Err(ExperimentError::Config("grid lr and w_gdp values must be > 0".into()));
        }
        if g.ridge_eps.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(ExperimentError::Config("grid ridge_eps values must be >= 0".into()));
        }
        if [&g.width, &g.depth, &g.dim, &g.patch_len]
            .iter()
            .any(|a| a.contains(&0))
        {
            return Err(ExperimentError::Config("grid sizes must be >= 1".into()));
        }
        if let (ModelBase::Patch(p), Some(h)) = (&self.model, self.seq_len) {
            let lens = if g.patch_len.is_empty() {
                vec![p.patch_len]
            } else {
                g.patch_len.clone()
            };
            if let Some(bad) = lens.iter().find(|&&l| l > h) {
                return Err(ExperimentError::Config(format!(
                    "patch length {bad} exceeds window length {h}"
                )));
            }
        }
        Ok(())
    }
}
