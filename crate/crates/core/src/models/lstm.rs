//! Stacked LSTM with an affine read-out of the last hidden state.
//!
//! Cell, per step and layer (gate order i, f, g, o in the fused weights):
//!
//! ```text
//! [i f g o] = x_t Wx + h_{t-1} Wh + b
//! c_t = sigmoid(f) * c_{t-1} + sigmoid(i) * tanh(g)
//! h_t = sigmoid(o) * tanh(c_t)
//! ```
//!
//! Hidden and cell states start at zero.

use serde::{Deserialize, Serialize};

use super::{rng, ModelError, Network};
use crate::nn::layers::{affine, glorot, init_affine};
use crate::nn::{Graph, NodeId, ParamNodes, ParamStore, Tensor};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LstmConfig {
    pub input_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    pub output_dim: usize,
}

impl LstmConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.hidden == 0 || self.layers == 0 || self.input_dim == 0 || self.output_dim == 0 {
            return Err(ModelError::Config("LSTM sizes must be >= 1".into()));
        }
        Ok(())
    }
}

impl<T: Scalar> Network<T> for LstmConfig {
    /// `[h, input_dim]` window, oldest row first.
    type Input = Tensor<T>;

    fn output_dim(&self) -> usize {
        self.output_dim
    }

    fn init_params(&self, seed: u64) -> ParamStore<T> {
        let mut r = rng(seed);
        let mut store = ParamStore::new();
        let hd = self.hidden;
        for l in 0..self.layers {
            let fan_in = if l == 0 { self.input_dim } else { hd };
            store.insert(format!("lstm.{l}.wx"), glorot(&mut r, fan_in, 4 * hd));
            store.insert(format!("lstm.{l}.wh"), glorot(&mut r, hd, 4 * hd));
            store.insert(format!("lstm.{l}.b"), Tensor::zeros(&[4 * hd]));
        }
        init_affine(&mut store, &mut r, "lstm.head", hd, self.output_dim);
        store
    }

    fn forward_batch(
        &self,
        g: &mut Graph<T>,
        params: &ParamNodes,
        inputs: &[&Tensor<T>],
    ) -> Result<NodeId, ModelError> {
        let steps = match inputs.first().and_then(|w| w.dims2()) {
            Some((h, d)) if d == self.input_dim && h > 0 => h,
            _ => {
                return Err(ModelError::Shape(format!(
                    "LSTM expects [h, {}] windows",
                    self.input_dim
                )))
            }
        };
        if inputs.iter().any(|w| w.shape() != [steps, self.input_dim]) {
            return Err(ModelError::Shape("LSTM windows in a batch must share a shape".into()));
        }
        let batch = inputs.len();
        let hd = self.hidden;
        let d = self.input_dim;

        let mut seq: Vec<NodeId> = (0..steps)
            .map(|t| {
                let mut data = Vec::with_capacity(batch * d);
                for w in inputs {
                    data.extend_from_slice(&w.data()[t * d..(t + 1) * d]);
                }
                g.constant(Tensor::new(vec![batch, d], data))
            })
            .collect();

        for l in 0..self.layers {
            let wx = params.get(&format!("lstm.{l}.wx"))?;
            let wh = params.get(&format!("lstm.{l}.wh"))?;
            let b = params.get(&format!("lstm.{l}.b"))?;
            let mut h = g.constant(Tensor::zeros(&[batch, hd]));
            let mut c = g.constant(Tensor::zeros(&[batch, hd]));
            let mut outs = Vec::with_capacity(steps);
            for &x in &seq {
                let zx = g.matmul(x, wx)?;
                let zh = g.matmul(h, wh)?;
                let z = g.add(zx, zh)?;
                let z = g.add_bias(z, b)?;
                let i = g.slice_last(z, 0, hd)?;
                let i = g.sigmoid(i)?;
                let f = g.slice_last(z, hd, hd)?;
                let f = g.sigmoid(f)?;
                let cand = g.slice_last(z, 2 * hd, hd)?;
                let cand = g.tanh(cand)?;
                let o = g.slice_last(z, 3 * hd, hd)?;
                let o = g.sigmoid(o)?;
                let keep = g.mul(f, c)?;
                let write = g.mul(i, cand)?;
                c = g.add(keep, write)?;
                let tc = g.tanh(c)?;
                h = g.mul(o, tc)?;
                outs.push(h);
            }
            seq = outs;
        }
        let last = *seq.last().expect("steps >= 1");
        Ok(affine(g, params, "lstm.head", last)?)
    }
}

pub fn lstm_forward<T: Scalar>(
    config: &LstmConfig,
    params: &ParamStore<T>,
    window: &Tensor<T>,
) -> Result<Vec<T>, ModelError> {
    config.validate()?;
    config.predict(params, window)
}
