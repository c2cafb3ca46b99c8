//! The multi-level autoencoder: per-level encoders whose outputs are summed
//! into one transmit signal, a global power normalization, and successive
//! (multi-stage) decoding that peels levels off the received signal.

pub mod arch;
mod checkpoint;
mod config;
mod model;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointError, FORMAT_VERSION, MAGIC};
pub use config::{ArchConfig, BitBlock, CodeConfig, LevelSet};
pub use model::{
    bits_tensor, threshold, BatchDecode, DecodeResult, MlaeModel, Seeds, DEFAULT_CALIBRATION_SAMPLES,
    MIN_CALIBRATION_SAMPLES,
};
