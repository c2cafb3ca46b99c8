//! A small reverse-mode neural-network engine: 1-D convolutions, batch
//! normalization, reshape, binary cross-entropy and Adam.
//!
//! Activations are `[batch, length, channels]`, row-major.

mod adam;
mod batchnorm;
mod conv;
mod loss;
mod network;
mod param;
mod scalar;
mod tensor;

pub use adam::AdamState;
pub use batchnorm::BatchNorm1d;
pub use conv::{Activation, Conv1d, Padding};
pub use loss::{bce_loss, bce_loss_logit_grad, BceOutput, BCE_EPSILON};
pub use network::{Layer, LayerSpec, Network, StateEntry};
pub use param::Param;
pub use scalar::Scalar;
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics, cached context for backward.
    Train,
    /// Running statistics, no cached state.
    Infer,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite values in {0}")]
    NonFinite(String),
    #[error("backward called without a stored training forward pass")]
    NoForwardContext,
    #[error("invalid layer configuration: {0}")]
    Config(String),
}
