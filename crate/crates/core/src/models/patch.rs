//! Channel-independent patch transformer forecaster.
//!
//! Every channel of the `[h, c]` window is handled on its own: its series is
//! cut into patches, each patch is embedded by a shared affine map, learned
//! position embeddings are added, and a shared encoder runs over the patch
//! tokens. The flattened encoding goes through that channel's own affine head.
//! Channels never exchange information, so output `k` depends on input column
//! `k` only. No instance normalization is applied.

use serde::{Deserialize, Serialize};

use super::{rng, ModelError, Network};
use crate::nn::layers::{affine, init_affine, uniform};
use crate::nn::{EncoderConfig, Graph, NodeId, ParamNodes, ParamStore, Tensor};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchConfig {
    pub seq_len: usize,
    pub patch_len: usize,
    pub stride: usize,
    pub width: usize,
    pub heads: usize,
    pub ff_width: usize,
    pub layers: usize,
    pub channels: usize,
    /// Outputs per channel head.
    pub head_dim: usize,
}

impl PatchConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.patch_len == 0 || self.stride == 0 || self.channels == 0 || self.head_dim == 0 {
            return Err(ModelError::Config("patch sizes must be >= 1".into()));
        }
        if self.patch_len > self.seq_len {
            return Err(ModelError::Config(format!(
                "patch length {} exceeds window length {}",
                self.patch_len, self.seq_len
            )));
        }
        self.encoder().validate().map_err(ModelError::Config)
    }

    /// `floor((h - p) / s) + 1`.
    pub fn num_patches(&self) -> usize {
        (self.seq_len - self.patch_len) / self.stride + 1
    }

    pub fn encoder(&self) -> EncoderConfig {
        EncoderConfig {
            width: self.width,
            heads: self.heads,
            ff_width: self.ff_width,
            layers: self.layers,
        }
    }

    /// `[num_patches, patch_len]` token matrix for one channel series.
    pub fn patch_tokens<T: Scalar>(&self, series: &[T]) -> Tensor<T> {
        let n = self.num_patches();
        let mut data = Vec::with_capacity(n * self.patch_len);
        for k in 0..n {
            let start = k * self.stride;
            data.extend_from_slice(&series[start..start + self.patch_len]);
        }
        Tensor::new(vec![n, self.patch_len], data)
    }
}

impl<T: Scalar> Network<T> for PatchConfig {
    /// `[h, c]` window.
    type Input = Tensor<T>;

    fn output_dim(&self) -> usize {
        self.channels * self.head_dim
    }

    fn init_params(&self, seed: u64) -> ParamStore<T> {
        let mut r = rng(seed);
        let mut store = ParamStore::new();
        let n = self.num_patches();
        init_affine(&mut store, &mut r, "patch.embed", self.patch_len, self.width);
        store.insert("patch.pos", uniform(&mut r, &[n, self.width], 0.02));
        self.encoder().init(&mut store, &mut r, "patch.enc");
        for k in 0..self.channels {
            init_affine(
                &mut store,
                &mut r,
                &format!("patch.head.{k}"),
                n * self.width,
                self.head_dim,
            );
        }
        store
    }

    fn forward_batch(
        &self,
        g: &mut Graph<T>,
        params: &ParamNodes,
        inputs: &[&Tensor<T>],
    ) -> Result<NodeId, ModelError> {
        self.validate()?;
        let (h, c) = (self.seq_len, self.channels);
        if let Some(bad) = inputs.iter().find(|w| w.shape() != [h, c]) {
            return Err(ModelError::Shape(format!(
                "patch forecaster expects [{h}, {c}] windows, got {:?}",
                bad.shape()
            )));
        }
        let n = self.num_patches();
        let (b, pl) = (inputs.len(), self.patch_len);
        // One encoder pass over all b * c series, stacked in (sample, channel)
        // order with n patch rows each.
        let mut data = Vec::with_capacity(b * c * n * pl);
        for w in inputs {
            for k in 0..c {
                let series: Vec<T> = (0..h).map(|t| w.get2(t, k)).collect();
                data.extend_from_slice(self.patch_tokens(&series).data());
            }
        }
        let tokens = g.constant(Tensor::new(vec![b * c * n, pl], data));
        let e = affine(g, params, "patch.embed", tokens)?;
        let pos_rows: Vec<usize> = (0..b * c).flat_map(|_| 0..n).collect();
        let pos = g.gather_rows(params.get("patch.pos")?, &pos_rows)?;
        let e = g.add(e, pos)?;
        let z = self.encoder().forward_grouped(g, params, "patch.enc", e, b * c)?;
        let flat = g.reshape(z, &[b * c, n * self.width])?;
        let mut outs = Vec::with_capacity(c);
        for k in 0..c {
            let rows: Vec<usize> = (0..b).map(|i| i * c + k).collect();
            let zk = g.gather_rows(flat, &rows)?;
            outs.push(affine(g, params, &format!("patch.head.{k}"), zk)?);
        }
        Ok(if c == 1 { outs[0] } else { g.concat(&outs)? })
    }
}

pub fn patch_forecast<T: Scalar>(
    config: &PatchConfig,
    params: &ParamStore<T>,
    window: &Tensor<T>,
) -> Result<Vec<T>, ModelError> {
    config.validate()?;
    config.predict(params, window)
}
