//! Exhaustive per-level BER/FER evaluation, aggregation and rate sweeps.
//!
//! Every frame draws its other-level messages and its noise from its own
//! random stream (keyed by seed, level and frame index) and error counts are
//! integers, so results do not depend on chunk size or thread count.

mod codec;
mod report;
pub mod csv;
pub mod svg;

use std::ops::Range;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{add_awgn, stream_index, ChannelConfig, RngStream};
use crate::mlae::{bits_tensor, LevelSet, MlaeModel};
use crate::nn::Tensor;
use crate::{Error, Result};

pub use codec::{BpskCodec, Codec};
pub use report::{aggregate, mean_ber, EvalMeta, EvalReport, LevelReport, LOW_CONFIDENCE_ERRORS};

const STREAM_EVAL: u8 = 32;

/// Default number of noise realizations per message.
pub const DEFAULT_TRIALS: u64 = 1 << 10;
/// Trials per message for quick desk-scale runs.
pub const DESK_TRIALS: u64 = 1 << 4;
/// Frames per level allowed without `force`.
pub const DEFAULT_BUDGET_FRAMES: u64 = 1 << 24;

/// How the bits of active levels other than the one under test are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum OtherLevelBits {
    #[default]
    RandomUniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub snr_db: f64,
    pub trials_per_codeword: u64,
    pub seed: u64,
    /// 1-based levels to test; `None` tests every active level.
    pub levels_under_test: Option<LevelSet>,
    pub other_level_bits: OtherLevelBits,
    /// Frames per batch handed to one worker.
    pub chunk_size: usize,
    /// Worker threads (1 runs on the calling thread).
    pub threads: usize,
    pub budget_frames: u64,
    /// Run even when the budget is exceeded.
    pub force: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            snr_db: 0.0,
            trials_per_codeword: DEFAULT_TRIALS,
            seed: 0,
            levels_under_test: None,
            other_level_bits: OtherLevelBits::RandomUniform,
            chunk_size: 1024,
            threads: 1,
            budget_frames: DEFAULT_BUDGET_FRAMES,
            force: false,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials_per_codeword == 0 {
            return Err(Error::Config("trials_per_codeword must be at least 1".into()));
        }
        if self.chunk_size == 0 {
            return Err(Error::Config("chunk_size must be at least 1".into()));
        }
        if self.threads == 0 {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(Error::Config("snr_db must be a number or +inf".into()));
        }
        Ok(())
    }
}

/// Stream of frame `frame` while testing level `level` (0-based).
pub fn frame_stream(seed: u64, level: usize, frame: u64) -> RngStream {
    debug_assert!(frame < 1 << 48);
    RngStream::new(seed, stream_index(STREAM_EVAL, ((level as u64) << 48) | frame))
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct Counts {
    bit_errors: u64,
    frame_errors: u64,
    frames: u64,
    per_message: Vec<u64>,
}

impl Counts {
    fn merge(mut self, other: Counts) -> Counts {
        self.bit_errors += other.bit_errors;
        self.frame_errors += other.frame_errors;
        self.frames += other.frames;
        if self.per_message.is_empty() {
            self.per_message = other.per_message;
        } else {
            for (a, b) in self.per_message.iter_mut().zip(other.per_message) {
                *a += b;
            }
        }
        self
    }
}

fn run_chunk<C: Codec + ?Sized>(
    codec: &C,
    position: usize,
    level: usize,
    frames: Range<u64>,
    channel: &ChannelConfig,
    seed: u64,
    track: bool,
) -> Result<Counts> {
    let width = codec.bits_per_level();
    let n = codec.blocklength();
    let messages = 1u64 << width;
    let active = codec.active_levels().len();
    let len = (frames.end - frames.start) as usize;
    let mut msgs = vec![Vec::with_capacity(len); active];
    let mut noise = vec![0.0f32; len * n * 2];
    for (i, f) in frames.clone().enumerate() {
        let mut rng = frame_stream(seed, level, f).rng();
        for (p, m) in msgs.iter_mut().enumerate() {
            m.push(if p == position { f % messages } else { rng.gen_range(0..messages) });
        }
        add_awgn(&mut noise[i * n * 2..(i + 1) * n * 2], channel, &mut rng);
    }
    let bits: Vec<Tensor<f32>> = msgs.iter().map(|m| bits_tensor(m, width)).collect();
    let mut y = codec.transmit(&bits)?;
    y.data_mut().iter_mut().zip(&noise).for_each(|(v, z)| *v += z);
    let hard = codec.receive(&y)?;

    let mut counts = Counts {
        frames: len as u64,
        per_message: if track { vec![0; messages as usize] } else { Vec::new() },
        ..Counts::default()
    };
    for i in 0..len {
        let range = i * width..(i + 1) * width;
        let mut any = false;
        for (p, b) in bits.iter().enumerate() {
            let wrong = hard[p][range.clone()]
                .iter()
                .zip(&b.data()[range.clone()])
                .filter(|(&h, &t)| h != t as u8)
                .count() as u64;
            if p == position {
                counts.bit_errors += wrong;
            }
            any |= wrong > 0;
        }
        counts.frame_errors += u64::from(any);
        if track {
            counts.per_message[msgs[position][i] as usize] += 1;
        }
    }
    Ok(counts)
}

fn chunks(total: u64, chunk: usize) -> Vec<Range<u64>> {
    (0..total)
        .step_by(chunk)
        .map(|s| s..(s + chunk as u64).min(total))
        .collect()
}

fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if threads == 1 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn evaluate_level_inner<C: Codec + ?Sized>(
    codec: &C,
    level: usize,
    cfg: &EvalConfig,
    track: bool,
) -> Result<(LevelReport, Vec<u64>)> {
    cfg.validate()?;
    let position = codec.active_levels().position(level).ok_or_else(|| {
        Error::Config(format!(
            "level {} is not active (active: {})",
            level + 1,
            codec.active_levels()
        ))
    })?;
    let width = codec.bits_per_level();
    let frames = (1u64 << width)
        .checked_mul(cfg.trials_per_codeword)
        .ok_or(Error::Budget { frames: u64::MAX, budget: cfg.budget_frames })?;
    if frames > cfg.budget_frames && !cfg.force {
        return Err(Error::Budget {
            frames,
            budget: cfg.budget_frames,
        });
    }
    let channel = ChannelConfig::new(codec.power(), cfg.snr_db)?;
    let ranges = chunks(frames, cfg.chunk_size);
    let work = || {
        let parts: Result<Vec<Counts>> = if cfg.threads == 1 {
            ranges
                .iter()
                .map(|r| run_chunk(codec, position, level, r.clone(), &channel, cfg.seed, track))
                .collect()
        } else {
            ranges
                .par_iter()
                .map(|r| run_chunk(codec, position, level, r.clone(), &channel, cfg.seed, track))
                .collect()
        };
        parts.map(|p| p.into_iter().fold(Counts::default(), Counts::merge))
    };
    let counts = with_threads(cfg.threads, work)??;
    Ok((
        LevelReport {
            level: level + 1,
            snr_db: cfg.snr_db,
            rate: codec.rate(),
            active_levels: codec.active_levels().clone(),
            bits_tested: counts.frames * width as u64,
            bit_errors: counts.bit_errors,
            frames_tested: counts.frames,
            frame_errors: counts.frame_errors,
        },
        counts.per_message,
    ))
}

/// Tests `level` (0-based, must be active) on every one of its `2^B`
/// messages, `trials_per_codeword` times each. A frame error is any wrong
/// bit across all active levels of that frame.
pub fn evaluate_level_exhaustive<C: Codec + ?Sized>(codec: &C, level: usize, cfg: &EvalConfig) -> Result<LevelReport> {
    evaluate_level_inner(codec, level, cfg, false).map(|(r, _)| r)
}

/// As [`evaluate_level_exhaustive`], also returning how often each message
/// index of the level was transmitted.
pub fn evaluate_level_traced<C: Codec + ?Sized>(
    codec: &C,
    level: usize,
    cfg: &EvalConfig,
) -> Result<(LevelReport, Vec<u64>)> {
    evaluate_level_inner(codec, level, cfg, true)
}

/// Evaluates the configured levels (default: all active) and aggregates.
pub fn evaluate<C: Codec + ?Sized>(codec: &C, cfg: &EvalConfig) -> Result<EvalReport> {
    let started = Instant::now();
    let levels = match &cfg.levels_under_test {
        Some(l) => l.indices().to_vec(),
        None => codec.active_levels().indices().to_vec(),
    };
    let reports = levels
        .iter()
        .map(|&l| evaluate_level_exhaustive(codec, l, cfg))
        .collect::<Result<Vec<_>>>()?;
    let mut report = aggregate(&reports)?;
    report.meta = Some(EvalMeta {
        trials_per_codeword: cfg.trials_per_codeword,
        seed: cfg.seed,
        threads: cfg.threads,
        chunk_size: cfg.chunk_size,
        elapsed_s: started.elapsed().as_secs_f64(),
    });
    Ok(report)
}

/// One report per (SNR, subset), ordered by SNR then rate. Each subset is
/// switched on (and calibrated if new) without changing any parameter; the
/// model's original subset is restored afterwards.
pub fn sweep(model: &mut MlaeModel, snrs: &[f64], subsets: &[LevelSet], cfg: &EvalConfig) -> Result<Vec<EvalReport>> {
    let original = model.active_levels().clone();
    let mut out = Vec::with_capacity(snrs.len() * subsets.len());
    let result = (|| -> Result<()> {
        for subset in subsets {
            model.set_active_levels(subset.clone())?;
            for &snr in snrs {
                let cfg = EvalConfig {
                    snr_db: snr,
                    levels_under_test: None,
                    ..cfg.clone()
                };
                out.push(evaluate(&*model, &cfg)?);
            }
        }
        Ok(())
    })();
    model.set_active_levels(original)?;
    result?;
    out.sort_by(|a, b| a.snr_db.total_cmp(&b.snr_db).then(a.rate.total_cmp(&b.rate)));
    Ok(out)
}

#[cfg(test)]
mod tests;
