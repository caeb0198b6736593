//! Dense `f64` tensors with tape-based reverse-mode differentiation.
//!
//! A [`Tape`] borrows a [`ParamStore`], records every op of one forward pass
//! and answers a single [`Tape::backward`] call. Ops never alias: each one
//! allocates its output.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, rel_error, GradCheck};
pub use tape::{Gradients, ParamId, ParamStore, Tape, Var};
pub use tensor::Tensor;

