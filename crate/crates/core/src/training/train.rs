//! Minibatch training loop for the differentiable families.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{loss_node, validation_loss, LossConfig};
use super::optim::{Optimizer, OptimizerKind};
use super::{derive_seed, TrainError};
use crate::models::{ModelError, Network};
use crate::nn::{Graph, GraphError, ParamStore, Tensor};
use crate::scalar::Scalar;

/// Fraction of the training indices held out for early stopping.
pub const HOLDOUT_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without held-out improvement before stopping. `None` trains
    /// on every index for the full epoch budget.
    pub patience: Option<usize>,
    pub seed: u64,
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch_size: 32,
            max_epochs: 200,
            patience: Some(20),
            seed: 0,
            optimizer: OptimizerKind::Adam,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(TrainError::Config(format!(
                "learning rate must be > 0, got {}",
                self.lr
            )));
        }
        if self.max_epochs == 0 {
            return Err(TrainError::Config("max_epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train: f64,
    pub valid: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    /// Parameters at the best held-out epoch, or after the last epoch when
    /// there is no hold-out.
    pub params: ParamStore<T>,
    pub curve: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

fn non_finite(e: &ModelError) -> bool {
    matches!(
        e,
        ModelError::Graph(GraphError::NonFinite { .. }) | ModelError::NonFinite(_)
    )
}

/// Trains `net` on the samples selected by `idx`.
pub fn train_network<T, N>(
    net: &N,
    inputs: &[N::Input],
    targets: &[Vec<T>],
    idx: &[usize],
    loss: &LossConfig,
    tc: &TrainConfig,
) -> Result<TrainOutcome<T>, TrainError>
where
    T: Scalar,
    N: Network<T>,
{
    tc.validate()?;
    loss.validate()?;
    if idx.is_empty() {
        return Err(TrainError::Config("no training samples".into()));
    }
    if inputs.len() != targets.len() {
        return Err(TrainError::Shape(format!(
            "{} inputs vs {} targets",
            inputs.len(),
            targets.len()
        )));
    }
    let m = net.output_dim();
    if let Some(&bad) = idx.iter().find(|&&i| i >= targets.len() || targets[i].len() != m) {
        return Err(TrainError::Shape(format!(
            "sample {bad} missing or target width != {m}"
        )));
    }

    let (fit_idx, hold_idx) = match tc.patience {
        Some(_) if idx.len() >= 2 => {
            let hold = ((idx.len() as f64 * HOLDOUT_FRACTION).ceil() as usize).max(1);
            idx.split_at(idx.len() - hold)
        }
        _ => (idx, &idx[..0]),
    };

    let mut params: ParamStore<T> = net.init_params(derive_seed(tc.seed, 0));
    let mut opt = Optimizer::new(tc.optimizer, &params);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(tc.seed, 1));
    let lr = T::of(tc.lr);
    let mode = loss.validation_mode();

    let mut order = fit_idx.to_vec();
    let mut curve = Vec::with_capacity(tc.max_epochs);
    let mut best: Option<(f64, usize, ParamStore<T>)> = None;
    let mut last_finite: Option<usize> = None;
    let mut stopped_early = false;

    for epoch in 0..tc.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for chunk in order.chunks(tc.batch_size) {
            let batch: Vec<&N::Input> = chunk.iter().map(|&i| &inputs[i]).collect();
            let rows: Vec<Vec<T>> = chunk.iter().map(|&i| targets[i].clone()).collect();
            let step = (|| -> Result<(f64, _), ModelError> {
                let mut g = Graph::new();
                let p = g.bind_params(&params)?;
                let out = net.forward_batch(&mut g, &p, &batch)?;
                let l = loss_node(&mut g, out, Tensor::from_rows(&rows), loss)?;
                let value = g.value(l).item().expect("scalar loss").as_f64();
                Ok((value, g.backward(l)?))
            })();
            let (value, grads) = match step {
                Ok(v) => v,
                Err(e) if non_finite(&e) => {
                    return Err(TrainError::Diverged {
                        last_finite_epoch: last_finite,
                    })
                }
                Err(e) => return Err(e.into()),
            };
            if !value.is_finite() {
                return Err(TrainError::Diverged {
                    last_finite_epoch: last_finite,
                });
            }
            opt.step(&mut params, &grads, lr);
            total += value * chunk.len() as f64;
        }
        let train = total / order.len() as f64;
        if !train.is_finite() || params.iter().any(|(_, t)| !t.is_finite()) {
            return Err(TrainError::Diverged {
                last_finite_epoch: last_finite,
            });
        }

        let valid = if hold_idx.is_empty() {
            None
        } else {
            let batch: Vec<&N::Input> = hold_idx.iter().map(|&i| &inputs[i]).collect();
            let preds = match net.predict_batch(&params, &batch) {
                Ok(p) => p,
                Err(e) if non_finite(&e) => {
                    return Err(TrainError::Diverged {
                        last_finite_epoch: last_finite,
                    })
                }
                Err(e) => return Err(e.into()),
            };
            let held: Vec<Vec<T>> = hold_idx.iter().map(|&i| targets[i].clone()).collect();
            let v = validation_loss(&preds, &held, mode)?.as_f64();
            if !v.is_finite() {
                return Err(TrainError::Diverged {
                    last_finite_epoch: last_finite,
                });
            }
            Some(v)
        };
        last_finite = Some(epoch);
        curve.push(EpochRecord { epoch, train, valid });

        if let (Some(v), Some(patience)) = (valid, tc.patience) {
            match &best {
                Some((b, _, _)) if v >= *b => {}
                _ => best = Some((v, epoch, params.clone())),
            }
            let since = epoch - best.as_ref().map_or(epoch, |b| b.1);
            if since >= patience {
                stopped_early = true;
                break;
            }
        }
    }

    let (params, best_epoch) = match best {
        Some((_, e, p)) => (p, e),
        None => (params, curve.len() - 1),
    };
    Ok(TrainOutcome {
        params,
        curve,
        best_epoch,
        stopped_early,
    })
}
