//! Speaker–listener motion generation: sequence formats, Transformer
//! blocks, and the socially-conditioned generator.

pub mod model;
pub mod seq;
pub mod transformer;

pub use model::{MotionGenConfig, MotionGenerator};
pub use seq::{aligned_length, resample_rows, AudioFeatureSeq, MotionGroup, MotionSeq};
pub use transformer::{AttnMask, MultiHeadAttention};

#[derive(Debug, thiserror::Error)]
pub enum MotionError {
    #[error("i/o failed on {path}: {what}")]
    Io { path: String, what: String },
    #[error("parse failure in {path}: {what}")]
    Parse { path: String, what: String },
    #[error("resampling failed: {what}")]
    Resample { what: String },
    #[error("contract violation: {what}")]
    Contract { what: String },
    #[error(transparent)]
    Num(#[from] crate::numcore::NumError),
}
