//! Minimal numeric foundation: dense f64 tensors, a reverse-mode tape,
//! small neural building blocks, Adam, and a finite-difference harness.
//!
//! Everything differentiable in the crate goes through [`Tape`]. Tensors are
//! immutable once bound to a tape pass; the tape itself is single-writer.

mod adam;
mod gradcheck;
mod nn;
mod rng;
mod tape;
mod tensor;

pub use adam::AdamState;
pub use gradcheck::{finite_diff_check, finite_diff_check_multi};
pub use nn::{
    Activation, Binding, LearningRates, Linear, Mlp2, Optimizer, ParamEntry, ParamGroup, ParamId,
    ParamStore,
};
pub use rng::Rng;
pub use tape::{matmul_raw, CustomOp, Grads, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum NumError {
    #[error("{op}: incompatible shapes {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("invalid shape ({what}): {shape:?}")]
    BadShape {
        what: &'static str,
        shape: Vec<usize>,
    },
    #[error("contract violation: {what}")]
    Contract { what: String },
}
