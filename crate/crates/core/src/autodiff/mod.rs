//! Reverse-mode differentiation over dense `f64` tensors, plus Adam.

mod adam;
mod gradcheck;
mod graph;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{grad_check, GradCheck};
pub use graph::{Axis, Gradients, Graph, Var};
pub use tensor::Tensor;

pub(crate) use graph::norm;
