//! Finite-difference gradient checks of each model family at small sizes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

use crate::models::{Family, LstmConfig, MlpConfig, ModelError, Network, PatchConfig, RtConfig, RtToken};
use crate::nn::{gradient_check, Activation, GradReport, Graph, ParamStore, Tensor};
use crate::training::loss::loss_node;
use crate::training::LossConfig;

/// Tolerance on the max relative error for a check to pass.
pub const GRADCHECK_TOL: f64 = 1e-4;

/// Central-difference step for each family. Recurrent weights far from the
/// output get gradients near 1e-7, where f64 round-off in the difference
/// quotient needs the larger LSTM step; attention curvature needs the
/// smaller one.
pub fn default_eps(family: Family) -> f64 {
    match family {
        Family::Lstm => 1e-4,
        _ => 1e-5,
    }
}

/// Batch size used by the family checks.
const BATCH: usize = 3;

#[derive(Debug, Clone, Copy)]
pub struct GradcheckOptions {
    /// `None` uses [`default_eps`].
    pub eps: Option<f64>,
    pub seed: u64,
    /// Embedding width for the RT check.
    pub embed_dim: usize,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            eps: None,
            seed: 0,
            embed_dim: 32,
        }
    }
}

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

/// Initial parameters moved off their symmetric starting values (unit
/// layer-norm gains, zero biases) so every path carries gradient.
fn perturbed_params<N: Network<f64>>(net: &N, rng: &mut ChaCha8Rng, seed: u64) -> ParamStore<f64> {
    let mut p = net.init_params(seed);
    for (_, t) in p.iter_mut() {
        for v in t.data_mut() {
            *v += rng.gen_range(-0.2..0.2);
        }
    }
    p
}

fn check<N: Network<f64>>(
    net: &N,
    inputs: &[N::Input],
    eps: f64,
    seed: u64,
    rng: &mut ChaCha8Rng,
) -> Result<GradReport, ModelError> {
    let params = perturbed_params(net, rng, seed);
    let mut g = Graph::new();
    let p = g.bind_params(&params)?;
    let refs: Vec<&N::Input> = inputs.iter().collect();
    let out = net.forward_batch(&mut g, &p, &refs)?;
    let targets = rand_tensor(rng, &[inputs.len(), net.output_dim()]);
    let loss = loss_node(&mut g, out, targets, &LossConfig::scalar_mse())?;
    Ok(gradient_check(&mut g, loss, eps, seed)?)
}

/// Builds a small model of `family` (window length 4, hidden and
/// feed-forward widths at most 8, 5 tokens), a random batch and random targets, and
/// compares analytic parameter gradients of the MSE loss with central
/// differences. The linear family has no gradient path and is rejected.
pub fn gradcheck_family(family: Family, opts: &GradcheckOptions) -> Result<GradReport, ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x9e37_79b9);
    let eps = opts.eps.unwrap_or_else(|| default_eps(family));
    match family {
        Family::Linear => Err(ModelError::Config("the linear family is fit in closed form".into())),
        Family::Mlp => {
            let net = MlpConfig {
                input_dim: 5,
                hidden: vec![8, 8],
                activation: Activation::Relu,
                output_dim: 2,
            };
            let xs: Vec<Vec<f64>> = (0..BATCH).map(|_| rand_tensor(&mut rng, &[5]).into_data()).collect();
            check(&net, &xs, eps, opts.seed, &mut rng)
        }
        Family::Lstm => {
            let net = LstmConfig {
                input_dim: 3,
                hidden: 3,
                layers: 2,
                output_dim: 2,
            };
            let xs: Vec<Tensor<f64>> = (0..BATCH).map(|_| rand_tensor(&mut rng, &[4, 3])).collect();
            check(&net, &xs, eps, opts.seed, &mut rng)
        }
        Family::Patch => {
            let net = PatchConfig {
                seq_len: 4,
                patch_len: 2,
                stride: 1,
                width: 8,
                heads: 2,
                ff_width: 8,
                layers: 1,
                channels: 3,
                head_dim: 1,
            };
            let xs: Vec<Tensor<f64>> = (0..BATCH).map(|_| rand_tensor(&mut rng, &[4, 3])).collect();
            check(&net, &xs, eps, opts.seed, &mut rng)
        }
        Family::Rt => {
            let net = RtConfig {
                embed_dim: opts.embed_dim,
                proj_dim: 4,
                value_dim: 4,
                layers: 1,
                heads: 2,
                ff_width: 8,
                max_tokens: 8,
            };
            let embeds: Vec<Arc<Vec<f64>>> = (0..5)
                .map(|_| Arc::new(rand_tensor(&mut rng, &[opts.embed_dim]).into_data()))
                .collect();
            let xs: Vec<Vec<RtToken<f64>>> = (0..BATCH)
                .map(|_| {
                    embeds
                        .iter()
                        .map(|e| RtToken {
                            embedding: e.clone(),
                            value: rng.gen_range(-1.0..1.0),
                        })
                        .collect()
                })
                .collect();
            check(&net, &xs, eps, opts.seed, &mut rng)
        }
    }
}
