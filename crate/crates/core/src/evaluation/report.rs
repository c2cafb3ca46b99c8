use serde::{Deserialize, Serialize};

use crate::mlae::LevelSet;
use crate::{Error, Result};

/// Below this many bit errors a BER estimate is flagged low-confidence.
pub const LOW_CONFIDENCE_ERRORS: u64 = 100;

/// Exact error counts for one level at one SNR and active subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    /// 1-based level number.
    pub level: usize,
    pub snr_db: f64,
    pub rate: f64,
    pub active_levels: LevelSet,
    pub bits_tested: u64,
    pub bit_errors: u64,
    pub frames_tested: u64,
    /// Frames with at least one wrong bit on any active level.
    pub frame_errors: u64,
}

impl LevelReport {
    pub fn ber(&self) -> f64 {
        ratio(self.bit_errors, self.bits_tested)
    }

    pub fn fer(&self) -> f64 {
        ratio(self.frame_errors, self.frames_tested)
    }

    pub fn low_confidence(&self) -> bool {
        self.bit_errors < LOW_CONFIDENCE_ERRORS
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Run settings echoed into a report; not part of report equality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMeta {
    pub trials_per_codeword: u64,
    pub seed: u64,
    pub threads: usize,
    pub chunk_size: usize,
    pub elapsed_s: f64,
}

/// Per-level reports of one (SNR, subset) with their aggregate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub snr_db: f64,
    pub rate: f64,
    pub active_levels: LevelSet,
    pub levels: Vec<LevelReport>,
    /// Mean of the level BERs.
    pub aggregate_ber: f64,
    pub bits_tested: u64,
    pub bit_errors: u64,
    pub frames_tested: u64,
    pub frame_errors: u64,
    pub meta: Option<EvalMeta>,
}

impl PartialEq for EvalReport {
    fn eq(&self, other: &Self) -> bool {
        self.snr_db.to_bits() == other.snr_db.to_bits()
            && self.rate.to_bits() == other.rate.to_bits()
            && self.active_levels == other.active_levels
            && self.levels == other.levels
            && self.aggregate_ber.to_bits() == other.aggregate_ber.to_bits()
            && self.bits_tested == other.bits_tested
            && self.bit_errors == other.bit_errors
            && self.frames_tested == other.frames_tested
            && self.frame_errors == other.frame_errors
    }
}

impl EvalReport {
    pub fn aggregate_fer(&self) -> f64 {
        ratio(self.frame_errors, self.frames_tested)
    }

    pub fn low_confidence(&self) -> bool {
        self.bit_errors < LOW_CONFIDENCE_ERRORS
    }
}

/// `(Σ ber_l) / L`.
pub fn mean_ber(bers: &[f64]) -> f64 {
    bers.iter().sum::<f64>() / bers.len() as f64
}

/// Combines level reports taken at the same SNR and subset.
///
/// When every level tested the same number of bits the mean is computed as
/// `Σ errors / Σ bits`, exactly as a ratio of integers.
pub fn aggregate(reports: &[LevelReport]) -> Result<EvalReport> {
    let first = reports
        .first()
        .ok_or_else(|| Error::MixedReports("no level reports to aggregate".into()))?;
    for r in &reports[1..] {
        if r.snr_db.to_bits() != first.snr_db.to_bits()
            || r.active_levels != first.active_levels
            || r.rate.to_bits() != first.rate.to_bits()
        {
            return Err(Error::MixedReports(format!(
                "level {} at {} dB / levels {} vs level {} at {} dB / levels {}",
                first.level, first.snr_db, first.active_levels, r.level, r.snr_db, r.active_levels
            )));
        }
        if reports.iter().filter(|o| o.level == r.level).count() > 1 {
            return Err(Error::MixedReports(format!("level {} reported twice", r.level)));
        }
    }
    let bits_tested = reports.iter().map(|r| r.bits_tested).sum();
    let bit_errors = reports.iter().map(|r| r.bit_errors).sum();
    let aggregate_ber = if reports.iter().all(|r| r.bits_tested == first.bits_tested) {
        ratio(bit_errors, bits_tested)
    } else {
        mean_ber(&reports.iter().map(LevelReport::ber).collect::<Vec<_>>())
    };
    Ok(EvalReport {
        snr_db: first.snr_db,
        rate: first.rate,
        active_levels: first.active_levels.clone(),
        levels: reports.to_vec(),
        aggregate_ber,
        bits_tested,
        bit_errors,
        frames_tested: reports.iter().map(|r| r.frames_tested).sum(),
        frame_errors: reports.iter().map(|r| r.frame_errors).sum(),
        meta: None,
    })
}
