//! Multi-country GDP-growth forecasting toolkit.

pub mod diagnostics;
pub mod embeddings;
pub mod experiment;
pub mod lights;
pub mod models;
pub mod nn;
pub mod panel;
pub mod report;
pub mod scalar;
pub mod synth;
pub mod training;

pub use scalar::Scalar;

/// Double-precision aliases used throughout the pipeline.
pub type Tensor64 = nn::Tensor<f64>;
pub type Graph64 = nn::Graph<f64>;
pub type ParamStore64 = nn::ParamStore<f64>;
pub type Tensor32 = nn::Tensor<f32>;
pub type Graph32 = nn::Graph<f32>;
