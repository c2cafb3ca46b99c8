//! Multi-level convolutional autoencoder (MLAE) for joint channel coding and
//! modulation over the AWGN channel.
//!
//! A message of `K = B·L` bits is split into `L` blocks of `B` bits. Each
//! block has its own convolutional encoder; the encoder outputs are summed,
//! power-normalized and sent over the channel. The receiver decodes the
//! levels one after another, re-encoding every decision and subtracting it
//! from the residual before the next level. Because each level only has
//! `2^B` messages, its whole sub-codebook can be tested exhaustively.

pub mod baselines;
pub mod channel;
mod error;
pub mod evaluation;
mod fsutil;
pub mod mlae;
pub mod nn;
pub mod training;

pub use error::{Error, Result};
pub use fsutil::write_atomic;
