//! AWGN channel, power bookkeeping and SNR arithmetic.
//!
//! The average power constraint is `P`, the total complex noise variance is
//! `N0`, and `SNR = P / N0`. Each real component of the noise has variance
//! `N0 / 2`.

mod rng;

pub use rng::{stream_index, RngStream, GAUSSIAN_METHOD, RNG_ALGORITHM};

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("invalid channel configuration: {0}")]
    Config(String),
    #[error("cannot measure the power of an empty batch")]
    EmptyBatch,
}

/// Average power constraint and noise level of the AWGN channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelConfig {
    power: f64,
    snr_db: f64,
    n0: f64,
}

impl ChannelConfig {
    /// Unit power, noise level from `snr_db`. `f64::INFINITY` is the
    /// noiseless sentinel (`n0 = 0`).
    pub fn from_snr_db(snr_db: f64) -> Result<Self, ChannelError> {
        Self::new(1.0, snr_db)
    }

    pub fn new(power: f64, snr_db: f64) -> Result<Self, ChannelError> {
        if !(power > 0.0 && power.is_finite()) {
            return Err(ChannelError::Config(format!("power {power} must be positive and finite")));
        }
        if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
            return Err(ChannelError::Config(format!("snr {snr_db} dB is not usable")));
        }
        let n0 = power / 10f64.powf(snr_db / 10.0);
        if !n0.is_finite() {
            return Err(ChannelError::Config(format!("snr {snr_db} dB gives non-finite noise")));
        }
        Ok(Self { power, snr_db, n0 })
    }

    pub fn noiseless() -> Self {
        Self {
            power: 1.0,
            snr_db: f64::INFINITY,
            n0: 0.0,
        }
    }

    pub fn power(&self) -> f64 {
        self.power
    }

    pub fn snr_db(&self) -> f64 {
        self.snr_db
    }

    pub fn snr_linear(&self) -> f64 {
        10f64.powf(self.snr_db / 10.0)
    }

    /// Total complex noise variance.
    pub fn n0(&self) -> f64 {
        self.n0
    }

    /// Recovers the SNR in dB from `P / N0`.
    pub fn snr_db_from_n0(&self) -> f64 {
        10.0 * (self.power / self.n0).log10()
    }

    /// Standard deviation of each real noise component, `sqrt(N0 / 2)`.
    pub fn component_std(&self) -> f64 {
        (self.n0 / 2.0).sqrt()
    }

    pub fn is_noiseless(&self) -> bool {
        self.n0 == 0.0
    }
}

/// Length-`n` complex sequence, interleaved as `(re, im)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSignal {
    pairs: Vec<f32>,
}

impl ComplexSignal {
    pub fn from_interleaved(pairs: Vec<f32>) -> Self {
        assert!(pairs.len().is_multiple_of(2), "interleaved signal needs an even length");
        Self { pairs }
    }

    pub fn from_pairs(symbols: &[(f32, f32)]) -> Self {
        Self {
            pairs: symbols.iter().flat_map(|&(r, i)| [r, i]).collect(),
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self { pairs: vec![0.0; 2 * n] }
    }

    /// Blocklength in complex channel uses.
    pub fn n(&self) -> usize {
        self.pairs.len() / 2
    }

    pub fn symbol(&self, i: usize) -> (f32, f32) {
        (self.pairs[2 * i], self.pairs[2 * i + 1])
    }

    pub fn as_interleaved(&self) -> &[f32] {
        &self.pairs
    }

    pub fn as_interleaved_mut(&mut self) -> &mut [f32] {
        &mut self.pairs
    }

    pub fn into_interleaved(self) -> Vec<f32> {
        self.pairs
    }

    /// `(1/n) Σ (re² + im²)`.
    pub fn power(&self) -> f64 {
        interleaved_power(&self.pairs)
    }
}

/// Mean of `re² + im²` over all complex symbols of an interleaved buffer.
pub fn interleaved_power(pairs: &[f32]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let sum: f64 = pairs.iter().map(|&v| (v as f64) * (v as f64)).sum();
    sum / (pairs.len() / 2) as f64
}

/// Mean power over every symbol of every signal in the batch.
pub fn measure_avg_power(batch: &[ComplexSignal]) -> Result<f64, ChannelError> {
    let symbols: usize = batch.iter().map(ComplexSignal::n).sum();
    if symbols == 0 {
        return Err(ChannelError::EmptyBatch);
    }
    let sum: f64 = batch
        .iter()
        .flat_map(|s| s.pairs.iter())
        .map(|&v| (v as f64) * (v as f64))
        .sum();
    Ok(sum / symbols as f64)
}

/// Adds circularly symmetric Gaussian noise of total variance `N0` to an
/// interleaved buffer in place.
pub fn add_awgn<R: Rng + ?Sized>(pairs: &mut [f32], cfg: &ChannelConfig, rng: &mut R) {
    if cfg.is_noiseless() {
        return;
    }
    let std = cfg.component_std();
    for v in pairs.iter_mut() {
        let w: f64 = rng.sample(StandardNormal);
        *v += (w * std) as f32;
    }
}

/// `y = x + w`.
pub fn awgn_transmit<R: Rng + ?Sized>(x: &ComplexSignal, cfg: &ChannelConfig, rng: &mut R) -> ComplexSignal {
    let mut y = x.clone();
    add_awgn(&mut y.pairs, cfg, rng);
    y
}

/// One unit-power configuration per SNR point.
pub fn snr_sweep(points: &[f64]) -> Result<Vec<ChannelConfig>, ChannelError> {
    points
        .iter()
        .map(|&p| {
            if !p.is_finite() {
                return Err(ChannelError::Config(format!("snr point {p} is not finite")));
            }
            ChannelConfig::from_snr_db(p)
        })
        .collect()
}
