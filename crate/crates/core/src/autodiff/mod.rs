//! Minimal reverse-mode differentiation over dense `f64` tensors of rank ≤ 3.

mod gradcheck;
mod graph;
mod kernels;
mod rng;
mod tensor;

pub use gradcheck::grad_check;
pub use graph::{Graph, OpKind, Unary, Var};
pub(crate) use rng::fnv1a;
pub use rng::Rng;
pub use tensor::{Shape, Tensor, MAX_RANK};
