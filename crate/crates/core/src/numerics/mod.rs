//! Dense double-precision tensors with a recorded reverse-mode graph.

mod finite_diff;
mod graph;
mod kernels;
mod tensor;

pub use finite_diff::{check_recorded, finite_diff_check, GradCheckReport, DEFAULT_STEP};
pub use graph::{Activation, DiffGraph, NodeId, OpKind};
pub use kernels::{sigmoid, softmax_in_place};
pub use tensor::Tensor;

/// Negative-side slope used when a LeakyReLU is requested without one.
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;
