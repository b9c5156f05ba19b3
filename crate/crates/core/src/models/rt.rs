//! Representation transformer: one token per indicator built from a text
//! embedding of the indicator's description plus its numeric value.
//!
//! Per token `i`:
//!
//! ```text
//! v_i = Rep_i W1 + b1                       (E -> P)
//! u_i = (x_i, ..., x_i)                     (value_dim copies)
//! c_i = concat(v_i, u_i) + pos[i]
//! (o_1..o_n) = encoder(c_1..c_n)
//! y = mean(o_1..o_n) W2 + b2
//! ```
//!
//! Position embeddings are learned slots `0..max_tokens`; a list of `n`
//! tokens uses the first `n` slots, so one parameter set serves any
//! indicator count up to `max_tokens`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{rng, ModelError, Network};
use crate::nn::layers::{affine, init_affine, uniform};
use crate::nn::{EncoderConfig, Graph, NodeId, ParamNodes, ParamStore, Tensor};
use crate::scalar::Scalar;

pub const DEFAULT_EMBED_DIM: usize = 6144;
pub const DEFAULT_MAX_TOKENS: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RtConfig {
    pub embed_dim: usize,
    pub proj_dim: usize,
    /// Number of times the indicator value is replicated into the token.
    pub value_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_width: usize,
    pub max_tokens: usize,
}

impl Default for RtConfig {
    fn default() -> Self {
        Self {
            embed_dim: DEFAULT_EMBED_DIM,
            proj_dim: 64,
            value_dim: 16,
            layers: 2,
            heads: 4,
            ff_width: 160,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }
}

/// One indicator observation. Embeddings are shared between tokens, so they
/// are reference counted.
#[derive(Debug, Clone, PartialEq)]
pub struct RtToken<T> {
    pub embedding: Arc<Vec<T>>,
    pub value: T,
}

impl RtConfig {
    pub fn token_dim(&self) -> usize {
        self.proj_dim + self.value_dim
    }

    pub fn encoder(&self) -> EncoderConfig {
        EncoderConfig {
            width: self.token_dim(),
            heads: self.heads,
            ff_width: self.ff_width,
            layers: self.layers,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.embed_dim == 0 || self.proj_dim == 0 || self.value_dim == 0 || self.max_tokens == 0 {
            return Err(ModelError::Config("RT dimensions must be >= 1".into()));
        }
        self.encoder().validate().map_err(ModelError::Config)
    }

    fn check_tokens<T: Scalar>(&self, tokens: &[RtToken<T>]) -> Result<(), ModelError> {
        if tokens.is_empty() {
            return Err(ModelError::Shape("RT needs at least one token".into()));
        }
        if tokens.len() > self.max_tokens {
            return Err(ModelError::Config(format!(
                "{} tokens exceed the {} position slots",
                tokens.len(),
                self.max_tokens
            )));
        }
        if let Some(t) = tokens.iter().find(|t| t.embedding.len() != self.embed_dim) {
            return Err(ModelError::Shape(format!(
                "embedding has length {}, expected {}",
                t.embedding.len(),
                self.embed_dim
            )));
        }
        Ok(())
    }
}

impl<T: Scalar> Network<T> for RtConfig {
    type Input = Vec<RtToken<T>>;

    fn output_dim(&self) -> usize {
        1
    }

    fn init_params(&self, seed: u64) -> ParamStore<T> {
        let mut r = rng(seed);
        let mut store = ParamStore::new();
        init_affine(&mut store, &mut r, "rt.proj", self.embed_dim, self.proj_dim);
        store.insert("rt.pos", uniform(&mut r, &[self.max_tokens, self.token_dim()], 0.02));
        self.encoder().init(&mut store, &mut r, "rt.enc");
        init_affine(&mut store, &mut r, "rt.out", self.token_dim(), 1);
        store
    }

    fn forward_batch(
        &self,
        g: &mut Graph<T>,
        params: &ParamNodes,
        inputs: &[&Vec<RtToken<T>>],
    ) -> Result<NodeId, ModelError> {
        self.validate()?;
        for tokens in inputs {
            self.check_tokens(tokens)?;
        }
        // Project each distinct embedding once.
        let mut distinct: Vec<&Arc<Vec<T>>> = Vec::new();
        let mut rows_per_sample = Vec::with_capacity(inputs.len());
        for tokens in inputs {
            let mut rows = Vec::with_capacity(tokens.len());
            for t in tokens.iter() {
                let slot = match distinct.iter().position(|d| Arc::ptr_eq(d, &t.embedding)) {
                    Some(i) => i,
                    None => {
                        distinct.push(&t.embedding);
                        distinct.len() - 1
                    }
                };
                rows.push(slot);
            }
            rows_per_sample.push(rows);
        }
        let reps: Vec<Vec<T>> = distinct.iter().map(|e| e.as_ref().clone()).collect();
        let reps = g.constant(Tensor::from_rows(&reps));
        let projected = affine(g, params, "rt.proj", reps)?;
        let pos = params.get("rt.pos")?;
        let enc = self.encoder();

        let mut outs = Vec::with_capacity(inputs.len());
        for (tokens, rows) in inputs.iter().zip(&rows_per_sample) {
            let n = tokens.len();
            let v = g.gather_rows(projected, rows)?;
            let values: Vec<T> = tokens
                .iter()
                .flat_map(|t| std::iter::repeat_n(t.value, self.value_dim))
                .collect();
            let u = g.constant(Tensor::new(vec![n, self.value_dim], values));
            let c = g.concat(&[v, u])?;
            let slots = g.slice_rows(pos, 0, n)?;
            let c = g.add(c, slots)?;
            let o = enc.forward(g, params, "rt.enc", c)?;
            let pooled = g.mean(o, 0)?;
            let pooled = g.reshape(pooled, &[1, self.token_dim()])?;
            outs.push(affine(g, params, "rt.out", pooled)?);
        }
        Ok(if outs.len() == 1 {
            outs[0]
        } else {
            g.concat_rows(&outs)?
        })
    }
}

pub fn rt_forward<T: Scalar>(
    config: &RtConfig,
    params: &ParamStore<T>,
    tokens: &[RtToken<T>],
) -> Result<T, ModelError> {
    config.validate()?;
    Ok(config.predict(params, &tokens.to_vec())?[0])
}
