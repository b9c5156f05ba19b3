//! The five model families: closed-form linear regression, MLP, LSTM,
//! channel-independent patch transformer, and the representation transformer.

pub mod linear;
pub mod lstm;
pub mod mlp;
pub mod patch;
pub mod rt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{Graph, GraphError, NodeId, ParamNodes, ParamStore};
use crate::scalar::Scalar;

pub use linear::{fit_linear, predict_linear, LinearModel, StackedLinear};
pub use lstm::LstmConfig;
pub use mlp::MlpConfig;
pub use patch::PatchConfig;
pub use rt::{RtConfig, RtToken};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("config: {0}")]
    Config(String),
    #[error("shape: {0}")]
    Shape(String),
    #[error("non-finite {0}")]
    NonFinite(String),
    #[error("normal equations are singular even with the fallback ridge")]
    Singular,
}

/// A differentiable model with a batched forward pass.
pub trait Network<T: Scalar>: Sync {
    type Input: Sync;

    fn output_dim(&self) -> usize;

    /// Seeded initial parameters.
    fn init_params(&self, seed: u64) -> ParamStore<T>;

    /// Builds the forward pass for a batch; the returned node is
    /// `[batch, output_dim]`.
    fn forward_batch(
        &self,
        g: &mut Graph<T>,
        params: &ParamNodes,
        inputs: &[&Self::Input],
    ) -> Result<NodeId, ModelError>;

    /// Convenience single-sample evaluation.
    fn predict(&self, params: &ParamStore<T>, input: &Self::Input) -> Result<Vec<T>, ModelError> {
        let mut g = Graph::new();
        let p = g.bind_params(params)?;
        let out = self.forward_batch(&mut g, &p, &[input])?;
        Ok(g.value(out).data().to_vec())
    }

    fn predict_batch(&self, params: &ParamStore<T>, inputs: &[&Self::Input]) -> Result<Vec<Vec<T>>, ModelError> {
        let mut g = Graph::new();
        let p = g.bind_params(params)?;
        let out = self.forward_batch(&mut g, &p, inputs)?;
        let m = self.output_dim();
        Ok(g.value(out).data().chunks(m).map(<[T]>::to_vec).collect())
    }
}

pub(crate) fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Architecture description stored next to every checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelSpec {
    Linear {
        input_dim: usize,
        output_dim: usize,
        ridge_eps: f64,
    },
    Mlp(MlpConfig),
    Lstm(LstmConfig),
    Patch(PatchConfig),
    Rt(RtConfig),
}

impl ModelSpec {
    pub fn family(&self) -> Family {
        match self {
            ModelSpec::Linear { .. } => Family::Linear,
            ModelSpec::Mlp(_) => Family::Mlp,
            ModelSpec::Lstm(_) => Family::Lstm,
            ModelSpec::Patch(_) => Family::Patch,
            ModelSpec::Rt(_) => Family::Rt,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Linear,
    Mlp,
    Lstm,
    Patch,
    Rt,
}

impl Family {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "linear" => Some(Family::Linear),
            "mlp" => Some(Family::Mlp),
            "lstm" => Some(Family::Lstm),
            "patch" => Some(Family::Patch),
            "rt" => Some(Family::Rt),
            _ => None,
        }
    }

    /// Column label used in reports.
    pub fn display_name(self) -> &'static str {
        match self {
            Family::Linear => "Linear Regression",
            Family::Mlp => "MLP",
            Family::Lstm => "LSTM",
            Family::Patch => "PatchTST",
            Family::Rt => "RT",
        }
    }
}
