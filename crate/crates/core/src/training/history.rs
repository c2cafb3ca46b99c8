use std::io::Write;

use serde::{Deserialize, Serialize};

/// One epoch of training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// Index into [`TrainHistory::phases`].
    pub phase: usize,
    /// Global epoch counter (drives the learning-rate schedule).
    pub epoch: usize,
    /// Mean training loss over the epoch's batches.
    pub loss: f64,
    /// Mean BCE of each trained level.
    pub level_loss: Vec<f64>,
    /// Mean power of the unnormalized superposition over the epoch's batches.
    pub mean_batch_power: f64,
    pub lr: f64,
    /// 1-based level numbers the validation BERs refer to.
    pub val_levels: Vec<usize>,
    pub val_ber: Vec<f64>,
    pub val_aggregate_ber: f64,
    pub val_loss: f64,
    pub batches: usize,
    /// First noise stream index used this epoch; batch `i` used
    /// `noise_stream_first + i`.
    pub noise_stream_first: u64,
    pub wall_clock_s: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phase {
    /// `"stage-2"` or `"joint"`.
    pub name: String,
    /// 1-based levels updated in this phase.
    pub trained_levels: Vec<usize>,
    /// Index of the first record of the phase.
    pub first_record: usize,
    /// Epoch whose parameters were kept, if any epoch ran.
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    pub phases: Vec<Phase>,
    pub steps: u64,
}

impl TrainHistory {
    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }

    /// Validation aggregate BER of the restored best epoch of the last phase.
    pub fn best_val_aggregate_ber(&self) -> Option<f64> {
        let best = self.phases.last()?.best_epoch?;
        self.records
            .iter()
            .find(|r| r.epoch == best)
            .map(|r| r.val_aggregate_ber)
    }

    /// Writes one JSON object per epoch.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}
