use serde::{Deserialize, Serialize};

use super::{rng, ModelError, Network};
use crate::nn::layers::{affine, init_affine};
use crate::nn::{Activation, Graph, NodeId, ParamNodes, ParamStore, Tensor};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub output_dim: usize,
}

impl MlpConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.hidden.is_empty() {
            return Err(ModelError::Config("MLP needs at least one hidden layer".into()));
        }
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden.contains(&0) {
            return Err(ModelError::Config("MLP widths must be >= 1".into()));
        }
        Ok(())
    }

    fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim];
        w.extend(&self.hidden);
        w.push(self.output_dim);
        w
    }
}

impl<T: Scalar> Network<T> for MlpConfig {
    type Input = Vec<T>;

    fn output_dim(&self) -> usize {
        self.output_dim
    }

    fn init_params(&self, seed: u64) -> ParamStore<T> {
        let mut r = rng(seed);
        let mut store = ParamStore::new();
        for (i, pair) in self.widths().windows(2).enumerate() {
            init_affine(&mut store, &mut r, &format!("mlp.{i}"), pair[0], pair[1]);
        }
        store
    }

    /// Affine → activation for every hidden layer, then a final affine map
    /// with no activation.
    fn forward_batch(&self, g: &mut Graph<T>, params: &ParamNodes, inputs: &[&Vec<T>]) -> Result<NodeId, ModelError> {
        if let Some(bad) = inputs.iter().find(|x| x.len() != self.input_dim) {
            return Err(ModelError::Shape(format!(
                "MLP input has {} features, expected {}",
                bad.len(),
                self.input_dim
            )));
        }
        let rows: Vec<Vec<T>> = inputs.iter().map(|x| (*x).clone()).collect();
        let mut h = g.constant(Tensor::from_rows(&rows));
        let layers = self.hidden.len() + 1;
        for i in 0..layers {
            h = affine(g, params, &format!("mlp.{i}"), h)?;
            if i + 1 < layers {
                h = self.activation.apply(g, h)?;
            }
        }
        Ok(h)
    }
}

/// Single-sample MLP evaluation.
pub fn mlp_forward<T: Scalar>(config: &MlpConfig, params: &ParamStore<T>, x: &[T]) -> Result<Vec<T>, ModelError> {
    config.validate()?;
    config.predict(params, &x.to_vec())
}
