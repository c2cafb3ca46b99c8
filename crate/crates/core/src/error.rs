use thiserror::Error;

use crate::channel::ChannelError;
use crate::mlae::CheckpointError;
use crate::nn::NnError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("frozen scale is not calibrated for active levels {0}")]
    Uncalibrated(String),
    #[error("calibration measured zero transmit power (degenerate encoder)")]
    DegenerateEncoder,
    #[error("expected {expected} messages (one per active level), got {got}")]
    MessageCount { expected: usize, got: usize },
    #[error("training diverged at epoch {epoch}: {detail}")]
    Divergence { epoch: usize, detail: String },
    #[error("evaluation of {frames} frames exceeds the budget of {budget} frames; raise the budget or force the run")]
    Budget { frames: u64, budget: u64 },
    #[error("cannot aggregate reports: {0}")]
    MixedReports(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
