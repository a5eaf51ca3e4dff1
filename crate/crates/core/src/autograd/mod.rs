//! Dense tensors, a tape-based reverse-mode differentiation engine and the
//! Adam optimizer.

mod adam;
pub(crate) mod conv;
mod graph;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState, Parameter};
pub use graph::{Activation, Graph, Var};
pub use tensor::Tensor;
