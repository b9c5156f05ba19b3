//! Dense tensors, a reverse-mode autodiff graph, finite-difference gradient
//! checking, and the parameter store file format.

pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod store;
pub mod tensor;

pub use gradcheck::{gradient_check, relative_error, GradReport};
pub use graph::{Gradients, Graph, GraphError, NodeId, ParamNodes};
pub use layers::{Activation, EncoderConfig};
pub use store::{ParamStore, StoreError};
pub use tensor::Tensor;
