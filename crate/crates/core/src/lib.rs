// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregation;
pub mod autodiff;
pub mod error;
pub mod harness;
pub mod model;
pub mod params;
pub mod recurrent;
pub mod tasks;
pub mod training;

pub use autodiff::{grad_check, Graph, OpKind, Rng, Shape, Tensor, Var};
pub use error::{Error, Result};
