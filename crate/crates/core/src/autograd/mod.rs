//! Reverse-mode automatic differentiation over dense f64 tensors.
//!
//! Every op records a backward closure on its output node; calling
//! [`Tensor::backward`] on a scalar walks the graph in reverse topological
//! order and accumulates gradients into every `requires_grad` leaf.
//! Broadcasting is deliberately narrow: the right operand of an elementwise
//! op may be a suffix of the left operand's shape (per-feature vectors
//! against batches), nothing more.

mod check;
mod ops;
mod tensor;

pub use check::{grad_check, grad_check_filtered};
pub use tensor::Tensor;

pub(crate) use tensor::Inner;
