//! Minimal differentiable model kernel: a small CNN/MLP with cross-entropy
//! loss and SGD, in double precision throughout. Everything is deterministic
//! given its inputs; nothing here holds shared mutable state.

mod arch;
mod model;
mod params;
mod sgd;

pub use arch::{LayerDesc, ModelArch, Shape};
pub use model::{forward, forward_image, init_params, loss_and_grad, predict, random_params};
pub use params::ParamVector;
pub use sgd::{sgd_step, SgdConfig, SgdState};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("vector length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("parameter vector has length {got}, architecture needs {expected}")]
    ParamLength { expected: usize, got: usize },
    #[error("input shape {got:?} does not match architecture input {expected:?}")]
    InputShape { expected: (usize, usize, usize), got: (usize, usize, usize) },
    #[error("invalid architecture at layer {layer}: {reason}")]
    BadArch { layer: usize, reason: String },
    #[error("non-finite value produced at {layer}")]
    NonFinite { layer: String },
    #[error("label {label} out of range for {classes} classes")]
    BadLabel { label: usize, classes: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("invalid sgd config: {0}")]
    BadSgdConfig(String),
}
