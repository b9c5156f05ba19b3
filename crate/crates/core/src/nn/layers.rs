//! Reusable building blocks: affine maps, activations, and a pre-norm
//! transformer encoder.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, GraphError, NodeId, ParamNodes};
use super::store::ParamStore;
use super::tensor::Tensor;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
    Gelu,
    Sigmoid,
}

impl Activation {
    pub fn apply<T: Scalar>(self, g: &mut Graph<T>, x: NodeId) -> Result<NodeId, GraphError> {
        match self {
            Activation::Relu => g.relu(x),
            Activation::Tanh => g.tanh(x),
            Activation::Gelu => g.gelu(x),
            Activation::Sigmoid => g.sigmoid(x),
        }
    }
}

/// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot<T: Scalar>(rng: &mut impl Rng, fan_in: usize, fan_out: usize) -> Tensor<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    uniform(rng, &[fan_in, fan_out], limit)
}

pub fn uniform<T: Scalar>(rng: &mut impl Rng, shape: &[usize], limit: f64) -> Tensor<T> {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| T::of(rng.gen_range(-limit..=limit))).collect(),
    )
}

/// Registers `{prefix}.w` `[fan_in, fan_out]` and a zero `{prefix}.b`.
pub fn init_affine<T: Scalar>(
    store: &mut ParamStore<T>,
    rng: &mut impl Rng,
    prefix: &str,
    fan_in: usize,
    fan_out: usize,
) {
    store.insert(format!("{prefix}.w"), glorot(rng, fan_in, fan_out));
    store.insert(format!("{prefix}.b"), Tensor::zeros(&[fan_out]));
}

/// `x W + b` for `x: [rows, fan_in]`.
pub fn affine<T: Scalar>(g: &mut Graph<T>, p: &ParamNodes, prefix: &str, x: NodeId) -> Result<NodeId, GraphError> {
    let w = p.get(&format!("{prefix}.w"))?;
    let b = p.get(&format!("{prefix}.b"))?;
    let y = g.matmul(x, w)?;
    g.add_bias(y, b)
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

fn init_layer_norm<T: Scalar>(store: &mut ParamStore<T>, prefix: &str, width: usize) {
    store.insert(format!("{prefix}.gamma"), Tensor::ones(&[width]));
    store.insert(format!("{prefix}.beta"), Tensor::zeros(&[width]));
}

fn layer_norm<T: Scalar>(g: &mut Graph<T>, p: &ParamNodes, prefix: &str, x: NodeId) -> Result<NodeId, GraphError> {
    let gamma = p.get(&format!("{prefix}.gamma"))?;
    let beta = p.get(&format!("{prefix}.beta"))?;
    g.layer_norm(x, gamma, beta, T::of(LAYER_NORM_EPS))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub width: usize,
    pub heads: usize,
    pub ff_width: usize,
    pub layers: usize,
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.width == 0 || self.heads == 0 || self.ff_width == 0 {
            return Err("encoder width, heads and ff_width must be >= 1".into());
        }
        if !self.width.is_multiple_of(self.heads) {
            return Err(format!(
                "heads ({}) must divide the token width ({})",
                self.heads, self.width
            ));
        }
        Ok(())
    }

    pub fn init<T: Scalar>(&self, store: &mut ParamStore<T>, rng: &mut impl Rng, prefix: &str) {
        let d = self.width;
        for l in 0..self.layers {
            let blk = format!("{prefix}.{l}");
            init_layer_norm(store, &format!("{blk}.ln1"), d);
            init_attention(store, rng, &format!("{blk}.attn"), d);
            init_layer_norm(store, &format!("{blk}.ln2"), d);
            init_affine(store, rng, &format!("{blk}.ff1"), d, self.ff_width);
            init_affine(store, rng, &format!("{blk}.ff2"), self.ff_width, d);
        }
        init_layer_norm(store, &format!("{prefix}.ln_f"), d);
    }

    /// Encodes a `[tokens, width]` sequence. Each block is
    /// `x + attn(ln1(x))` followed by `x + ff(ln2(x))` with a gelu feed-forward;
    /// a final layer norm closes the stack. No attention mask.
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        p: &ParamNodes,
        prefix: &str,
        x: NodeId,
    ) -> Result<NodeId, GraphError> {
        self.forward_grouped(g, p, prefix, x, 1)
    }

    /// Encodes `groups` equal-length sequences stacked along the rows of `x`
    /// in one pass. Attention stays within each sequence.
    pub fn forward_grouped<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        p: &ParamNodes,
        prefix: &str,
        mut x: NodeId,
        groups: usize,
    ) -> Result<NodeId, GraphError> {
        for l in 0..self.layers {
            let blk = format!("{prefix}.{l}");
            let h = layer_norm(g, p, &format!("{blk}.ln1"), x)?;
            let a = grouped_attention(g, p, &format!("{blk}.attn"), h, self.heads, groups)?;
            x = g.add(x, a)?;
            let h = layer_norm(g, p, &format!("{blk}.ln2"), x)?;
            let f = affine(g, p, &format!("{blk}.ff1"), h)?;
            let f = g.gelu(f)?;
            let f = affine(g, p, &format!("{blk}.ff2"), f)?;
            x = g.add(x, f)?;
        }
        layer_norm(g, p, &format!("{prefix}.ln_f"), x)
    }
}

/// Registers q/k/v/o projections for [`multi_head_attention`]. The key
/// projection has no bias: it would shift every score in a row equally and
/// cancel in the softmax.
pub fn init_attention<T: Scalar>(store: &mut ParamStore<T>, rng: &mut impl Rng, prefix: &str, width: usize) {
    for proj in ["q", "v", "o"] {
        init_affine(store, rng, &format!("{prefix}.{proj}"), width, width);
    }
    store.insert(format!("{prefix}.k.w"), glorot(rng, width, width));
}

/// Scaled dot-product self-attention over the rows of `x: [tokens, width]`
/// with `heads` equal slices of the projected width.
pub fn multi_head_attention<T: Scalar>(
    g: &mut Graph<T>,
    p: &ParamNodes,
    prefix: &str,
    x: NodeId,
    heads: usize,
) -> Result<NodeId, GraphError> {
    grouped_attention(g, p, prefix, x, heads, 1)
}

/// [`multi_head_attention`] applied independently to `groups` sequences
/// stacked along the rows of `x`.
pub fn grouped_attention<T: Scalar>(
    g: &mut Graph<T>,
    p: &ParamNodes,
    prefix: &str,
    x: NodeId,
    heads: usize,
    groups: usize,
) -> Result<NodeId, GraphError> {
    let width = g.value(x).last_dim();
    if heads == 0 || !width.is_multiple_of(heads) {
        return Err(GraphError::InvalidArgument(format!(
            "{heads} heads do not divide width {width}"
        )));
    }
    let dh = width / heads;
    let q = affine(g, p, &format!("{prefix}.q"), x)?;
    let wk = p.get(&format!("{prefix}.k.w"))?;
    let k = g.matmul(x, wk)?;
    let v = affine(g, p, &format!("{prefix}.v"), x)?;
    let scale = T::one() / T::of(dh as f64).sqrt();
    let mut outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = g.slice_last(q, h * dh, dh)?;
        let kh = g.slice_last(k, h * dh, dh)?;
        let vh = g.slice_last(v, h * dh, dh)?;
        let scores = g.block_matmul(qh, kh, groups, true)?;
        let scores = g.scale(scores, scale)?;
        let attn = g.softmax(scores)?;
        outs.push(g.block_matmul(attn, vh, groups, false)?);
    }
    let cat = if heads == 1 { outs[0] } else { g.concat(&outs)? };
    affine(g, p, &format!("{prefix}.o"), cat)
}
