//! Grid-point to model mapping and the fold trainer used by the search.

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ModelBase, Task};
use super::data::SampleSet;
use crate::models::{LstmConfig, MlpConfig, ModelError, ModelSpec, Network, PatchConfig, RtConfig, StackedLinear};
use crate::nn::ParamStore;
use crate::training::{
    train_network, validation_loss, EpochRecord, FoldTrainer, GridPoint, LossConfig, TrainConfig, TrainError,
};

/// Samples per forward pass at prediction time.
const PREDICT_CHUNK: usize = 256;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub spec: ModelSpec,
    pub point: GridPoint,
    pub params: ParamStore<f64>,
    pub train_count: usize,
    pub curve: Vec<EpochRecord>,
}

/// Input and output sizes the architecture must match.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shapes {
    pub flat_dim: usize,
    /// Window length and row width for windowed tasks.
    pub window: Option<(usize, usize)>,
    pub out_dim: usize,
    pub embed_dim: Option<usize>,
}

/// Architecture for `point`, with unset knobs taken from `base`.
///
/// `width` sets every hidden width (MLP), the hidden size (LSTM), the token
/// width (patch) or the feed-forward width (RT). `depth` sets the number of
/// hidden or encoder layers. `dim` sets the RT projection width.
pub fn model_spec(base: &ModelBase, point: &GridPoint, shapes: &Shapes) -> Result<ModelSpec, ModelError> {
    let spec = match base {
        ModelBase::Linear(b) => ModelSpec::Linear {
            input_dim: shapes.flat_dim,
            output_dim: shapes.out_dim,
            ridge_eps: point.ridge_eps.unwrap_or(b.ridge_eps),
        },
        ModelBase::Mlp(b) => {
            let mut hidden = b.hidden.clone();
            if let Some(d) = point.depth {
                let w = hidden.first().copied().unwrap_or(32);
                hidden = vec![w; d];
            }
            if let Some(w) = point.width {
                hidden.iter_mut().for_each(|h| *h = w);
            }
            let cfg = MlpConfig {
                input_dim: shapes.flat_dim,
                hidden,
                activation: b.activation,
                output_dim: shapes.out_dim,
            };
            cfg.validate()?;
            ModelSpec::Mlp(cfg)
        }
        ModelBase::Lstm(b) => {
            let (_, d) = shapes
                .window
                .ok_or_else(|| ModelError::Config("LSTM needs windowed inputs".into()))?;
            let cfg = LstmConfig {
                input_dim: d,
                hidden: point.width.unwrap_or(b.hidden),
                layers: point.depth.unwrap_or(b.layers),
                output_dim: shapes.out_dim,
            };
            cfg.validate()?;
            ModelSpec::Lstm(cfg)
        }
        ModelBase::Patch(b) => {
            let (h, d) = shapes
                .window
                .ok_or_else(|| ModelError::Config("patch model needs windowed inputs".into()))?;
            if !shapes.out_dim.is_multiple_of(d) {
                return Err(ModelError::Config(format!(
                    "{} outputs do not split over {d} channels",
                    shapes.out_dim
                )));
            }
            let cfg = PatchConfig {
                seq_len: h,
                patch_len: point.patch_len.unwrap_or(b.patch_len),
                stride: b.stride,
                width: point.width.unwrap_or(b.width),
                heads: b.heads,
                ff_width: b.ff_width,
                layers: point.depth.unwrap_or(b.layers),
                channels: d,
                head_dim: shapes.out_dim / d,
            };
            cfg.validate()?;
            ModelSpec::Patch(cfg)
        }
        ModelBase::Rt(b) => {
            let embed_dim = shapes
                .embed_dim
                .ok_or_else(|| ModelError::Config("RT needs an embedding dimension".into()))?;
            let cfg = RtConfig {
                embed_dim,
                proj_dim: point.dim.unwrap_or(b.proj_dim),
                value_dim: b.value_dim,
                layers: point.depth.unwrap_or(b.layers),
                heads: b.heads,
                ff_width: point.width.unwrap_or(b.ff_width),
                max_tokens: b.max_tokens,
            };
            cfg.validate()?;
            if shapes.flat_dim > cfg.max_tokens {
                return Err(ModelError::Config(format!(
                    "{} indicator tokens exceed max_tokens {}",
                    shapes.flat_dim, cfg.max_tokens
                )));
            }
            ModelSpec::Rt(cfg)
        }
    };
    Ok(spec)
}

/// Trains one family on a fixed training sample set.
pub struct FamilyTrainer<'a> {
    pub base: &'a ModelBase,
    pub train_cfg: &'a TrainConfig,
    pub task: Task,
    pub w_gdp: f64,
    pub shapes: Shapes,
    pub data: &'a SampleSet,
}

impl<'a> FamilyTrainer<'a> {
    pub fn new(cfg: &'a ExperimentConfig, data: &'a SampleSet, shapes: Shapes) -> Self {
        Self {
            base: &cfg.model,
            train_cfg: &cfg.train,
            task: cfg.task,
            w_gdp: cfg.loss.w_gdp,
            shapes,
            data,
        }
    }

    /// Weighted loss for multi-indicator targets, plain MSE otherwise.
    pub fn loss(&self, point: &GridPoint) -> LossConfig {
        match self.task {
            Task::MultiIndicator => LossConfig::weighted(point.w_gdp.unwrap_or(self.w_gdp)),
            _ => LossConfig::scalar_mse(),
        }
    }

    fn train_with<N: Network<f64>>(
        &self,
        net: &N,
        inputs: &[N::Input],
        point: &GridPoint,
        idx: &[usize],
        seed: u64,
    ) -> Result<(ParamStore<f64>, Vec<EpochRecord>), TrainError> {
        let tc = TrainConfig {
            lr: point.lr.unwrap_or(self.train_cfg.lr),
            seed,
            ..self.train_cfg.clone()
        };
        let out = train_network(net, inputs, &self.data.targets, idx, &self.loss(point), &tc)?;
        Ok((out.params, out.curve))
    }
}

impl FoldTrainer for FamilyTrainer<'_> {
    type Checkpoint = Checkpoint;

    fn fit(&self, point: &GridPoint, train_idx: &[usize], seed: u64) -> Result<Checkpoint, TrainError> {
        let spec = model_spec(self.base, point, &self.shapes)?;
        let d = self.data;
        let (params, curve) = match &spec {
            ModelSpec::Linear { ridge_eps, .. } => {
                let x: Vec<Vec<f64>> = train_idx.iter().map(|&i| d.flat[i].clone()).collect();
                let y: Vec<Vec<f64>> = train_idx.iter().map(|&i| d.targets[i].clone()).collect();
                (StackedLinear::fit(&x, &y, *ridge_eps)?.to_store(), Vec::new())
            }
            ModelSpec::Mlp(c) => self.train_with(c, &d.flat, point, train_idx, seed)?,
            ModelSpec::Lstm(c) => self.train_with(c, &d.seq, point, train_idx, seed)?,
            ModelSpec::Patch(c) => self.train_with(c, &d.seq, point, train_idx, seed)?,
            ModelSpec::Rt(c) => self.train_with(c, &d.tokens, point, train_idx, seed)?,
        };
        Ok(Checkpoint {
            spec,
            point: point.clone(),
            params,
            train_count: train_idx.len(),
            curve,
        })
    }

    fn validate(&self, ckpt: &Checkpoint, valid_idx: &[usize]) -> Result<f64, TrainError> {
        let preds = predict(ckpt, self.data, valid_idx)?;
        let targets: Vec<Vec<f64>> = valid_idx.iter().map(|&i| self.data.targets[i].clone()).collect();
        validation_loss(&preds, &targets, self.loss(&ckpt.point).validation_mode())
    }
}

fn batched<N: Network<f64>>(
    net: &N,
    params: &ParamStore<f64>,
    inputs: &[N::Input],
    idx: &[usize],
) -> Result<Vec<Vec<f64>>, ModelError> {
    let mut out = Vec::with_capacity(idx.len());
    for chunk in idx.chunks(PREDICT_CHUNK) {
        let refs: Vec<&N::Input> = chunk.iter().map(|&i| &inputs[i]).collect();
        out.extend(net.predict_batch(params, &refs)?);
    }
    Ok(out)
}

/// Predictions (normalized units, GDP last) for the samples in `idx`.
pub fn predict(ckpt: &Checkpoint, data: &SampleSet, idx: &[usize]) -> Result<Vec<Vec<f64>>, ModelError> {
    match &ckpt.spec {
        ModelSpec::Linear { .. } => {
            let model = StackedLinear::from_store(&ckpt.params)?;
            idx.iter().map(|&i| model.predict_one(&data.flat[i])).collect()
        }
        ModelSpec::Mlp(c) => batched(c, &ckpt.params, &data.flat, idx),
        ModelSpec::Lstm(c) => batched(c, &ckpt.params, &data.seq, idx),
        ModelSpec::Patch(c) => batched(c, &ckpt.params, &data.seq, idx),
        ModelSpec::Rt(c) => batched(c, &ckpt.params, &data.tokens, idx),
    }
}
