//! Dataset construction and joint or stagewise training.
//!
//! Each batch runs encode → sum → batch power normalization → AWGN →
//! successive decoding → weighted BCE → Adam. Training normalizes power per
//! batch (differentiably); inference uses the frozen calibrated scale.

mod config;
mod dataset;
mod history;
mod step;

use std::time::Instant;

use rand::Rng;

use crate::channel::{add_awgn, ChannelConfig, RngStream};
use crate::channel::stream_index;
use crate::mlae::{bits_tensor, LevelSet, MlaeModel};
use crate::nn::{NnError, Tensor};
use crate::{Error, Result};

pub use config::{TrainConfig, TrainMode};
pub use dataset::{generate_dataset, Dataset, MAX_DATASET_BITS};
pub use history::{EpochRecord, Phase, TrainHistory};
pub(crate) use step::{accumulate_gradients, Optimizers, StepPlan};

const STREAM_NOISE: u8 = 16;
const STREAM_SHUFFLE: u8 = 17;
const STREAM_VAL_MESSAGES: u8 = 18;
const STREAM_VAL_NOISE: u8 = 19;
const STREAM_VAL_CALIBRATION: u8 = 20;

const VAL_CHUNK: usize = 1024;

/// Noise stream index for batch `batch` of global epoch `epoch`.
pub fn noise_stream(epoch: usize, batch: usize) -> u64 {
    stream_index(STREAM_NOISE, ((epoch as u64) << 32) | batch as u64)
}

/// Fixed validation frames: random messages per level, each repeated with
/// independent noise at the training SNR.
struct ValidationSet {
    messages: Vec<Vec<u64>>,
    noise: Vec<f32>,
    frames: usize,
}

impl ValidationSet {
    fn new(model: &MlaeModel, cfg: &TrainConfig) -> Result<Self> {
        let levels = model.code().num_levels;
        let count = model.code().messages_per_level();
        let frames = cfg.val_messages * cfg.val_noise;
        let messages = (0..levels)
            .map(|l| {
                let mut rng = RngStream::new(cfg.seed, stream_index(STREAM_VAL_MESSAGES, l as u64)).rng();
                let base: Vec<u64> = (0..cfg.val_messages).map(|_| rng.gen_range(0..count)).collect();
                (0..cfg.val_noise).flat_map(|_| base.iter().copied()).collect()
            })
            .collect();
        let channel = ChannelConfig::new(model.power(), cfg.train_snr_db)?;
        let mut noise = vec![0.0f32; frames * model.code().blocklength * 2];
        add_awgn(&mut noise, &channel, &mut RngStream::new(cfg.seed, stream_index(STREAM_VAL_NOISE, 0)).rng());
        Ok(Self { messages, noise, frames })
    }

    /// Per-level BER and mean BCE of the model's active subset, with the
    /// model's frozen scale.
    fn evaluate(&self, model: &MlaeModel) -> Result<(Vec<f64>, f64)> {
        let active = model.active_levels().indices().to_vec();
        let (n, width) = (model.code().blocklength, model.code().bits_per_level);
        let mut errors = vec![0u64; active.len()];
        let mut bce = 0.0f64;
        let mut start = 0;
        while start < self.frames {
            let len = VAL_CHUNK.min(self.frames - start);
            let bits: Vec<Tensor<f32>> = active
                .iter()
                .map(|&l| bits_tensor(&self.messages[l][start..start + len], width))
                .collect();
            let mut y = model.encode_batch(&bits)?;
            let noise = &self.noise[start * n * 2..(start + len) * n * 2];
            y.data_mut().iter_mut().zip(noise).for_each(|(v, z)| *v += z);
            let d = model.decode_batch(&y)?;
            for (pos, b) in bits.iter().enumerate() {
                for ((&h, &t), &p) in d.hard[pos].iter().zip(b.data()).zip(d.soft[pos].data()) {
                    errors[pos] += u64::from(h != t as u8);
                    let p = (p as f64).clamp(crate::nn::BCE_EPSILON, 1.0 - crate::nn::BCE_EPSILON);
                    bce -= if t > 0.5 { p.ln() } else { (1.0 - p).ln() };
                }
            }
            start += len;
        }
        let bits_per_level = (self.frames * width) as f64;
        let ber = errors.iter().map(|&e| e as f64 / bits_per_level).collect();
        Ok((ber, bce / (bits_per_level * active.len() as f64)))
    }
}

struct EpochTotals {
    loss: f64,
    level_loss: Vec<f64>,
    batch_power: f64,
    batches: usize,
    noise_first: u64,
}

struct PhaseSpec {
    name: String,
    active: LevelSet,
    trainable: Vec<bool>,
    weights: Vec<f64>,
    epochs: usize,
}

/// Called after every epoch with its record and the model as trained so far
/// (before any best-epoch restoration).
pub type EpochObserver<'a> = dyn FnMut(&EpochRecord, &MlaeModel) + 'a;

struct Trainer<'a, 'o> {
    cfg: &'a TrainConfig,
    observer: &'o mut EpochObserver<'o>,
    dataset: Dataset,
    validation: ValidationSet,
    optimizers: Optimizers,
    channel: ChannelConfig,
    history: TrainHistory,
    global_epoch: usize,
}

impl<'a, 'o> Trainer<'a, 'o> {
    fn new(model: &MlaeModel, cfg: &'a TrainConfig, observer: &'o mut EpochObserver<'o>) -> Result<Self> {
        cfg.validate(model.code().num_levels)?;
        Ok(Self {
            cfg,
            observer,
            dataset: generate_dataset(model.code().bits_per_level, cfg.repetitions)?,
            validation: ValidationSet::new(model, cfg)?,
            optimizers: Optimizers::new(model.code().num_levels, cfg.lr_initial),
            channel: ChannelConfig::new(model.power(), cfg.train_snr_db)?,
            history: TrainHistory::default(),
            global_epoch: 0,
        })
    }

    fn validate_epoch(&self, model: &mut MlaeModel, epoch: usize) -> Result<(Vec<f64>, f64)> {
        let mut rng = RngStream::new(self.cfg.seed, stream_index(STREAM_VAL_CALIBRATION, epoch as u64)).rng();
        model.calibrate_scale(self.cfg.calibration_samples, &mut rng)?;
        self.validation.evaluate(model)
    }

    fn run_epoch(&mut self, model: &mut MlaeModel, spec: &PhaseSpec) -> Result<EpochTotals> {
        let epoch = self.global_epoch;
        let lr = self.cfg.learning_rate(epoch);
        let levels = spec.active.indices();
        let orders: Vec<Vec<u32>> = levels
            .iter()
            .map(|&l| {
                let counter = ((epoch as u64) << 8) | l as u64;
                self.dataset
                    .shuffled(&mut RngStream::new(self.cfg.seed, stream_index(STREAM_SHUFFLE, counter)).rng())
            })
            .collect();
        let plan = StepPlan {
            levels,
            trainable: &spec.trainable,
            weights: &spec.weights,
            teacher_forcing: self.cfg.teacher_forcing,
            channel: self.channel,
        };
        let width = model.code().bits_per_level;
        let rows = self.dataset.len();
        let mut totals = EpochTotals {
            loss: 0.0,
            level_loss: vec![0.0; spec.trainable.iter().filter(|&&t| t).count()],
            batch_power: 0.0,
            batches: 0,
            noise_first: noise_stream(epoch, 0),
        };
        for (b, start) in (0..rows).step_by(self.cfg.batch_size).enumerate() {
            let end = (start + self.cfg.batch_size).min(rows);
            let bits: Vec<Tensor<f32>> = orders
                .iter()
                .map(|o| {
                    let idx: Vec<u64> = o[start..end].iter().map(|&m| m as u64).collect();
                    bits_tensor(&idx, width)
                })
                .collect();
            let mut noise_rng = RngStream::new(self.cfg.seed, noise_stream(epoch, b)).rng();
            let out = accumulate_gradients(model, &plan, &bits, &mut noise_rng)
                .map_err(|e| divergence(e, epoch))?;
            self.optimizers
                .apply(model, &plan, lr)
                .map_err(|e| divergence(Error::Nn(e), epoch))?;
            totals.loss += out.loss;
            totals.level_loss.iter_mut().zip(&out.level_losses).for_each(|(a, b)| *a += b);
            totals.batch_power += out.batch_power;
            totals.batches += 1;
        }
        self.history.steps += totals.batches as u64;
        let k = totals.batches as f64;
        totals.loss /= k;
        totals.level_loss.iter_mut().for_each(|v| *v /= k);
        totals.batch_power /= k;
        Ok(totals)
    }

    fn run_phase(&mut self, model: &mut MlaeModel, spec: PhaseSpec) -> Result<()> {
        model.set_active_unchecked(spec.active.clone());
        let mut phase = Phase {
            name: spec.name.clone(),
            trained_levels: spec
                .active
                .indices()
                .iter()
                .zip(&spec.trainable)
                .filter(|(_, &t)| t)
                .map(|(&l, _)| l + 1)
                .collect(),
            first_record: self.history.records.len(),
            best_epoch: None,
            stopped_early: false,
        };
        let phase_index = self.history.phases.len();
        let mut best: Option<(f64, f64, MlaeModel)> = None;
        let mut since_best = 0;
        for _ in 0..spec.epochs {
            let started = Instant::now();
            let epoch = self.global_epoch;
            let t = self.run_epoch(model, &spec)?;
            let (val_ber, val_loss) = self.validate_epoch(model, epoch)?;
            let aggregate = val_ber.iter().sum::<f64>() / val_ber.len() as f64;
            self.history.records.push(EpochRecord {
                phase: phase_index,
                epoch,
                loss: t.loss,
                level_loss: t.level_loss,
                mean_batch_power: t.batch_power,
                lr: self.cfg.learning_rate(epoch),
                val_levels: spec.active.indices().iter().map(|l| l + 1).collect(),
                val_ber,
                val_aggregate_ber: aggregate,
                val_loss,
                batches: t.batches,
                noise_stream_first: t.noise_first,
                wall_clock_s: started.elapsed().as_secs_f64(),
            });
            (self.observer)(self.history.records.last().expect("just pushed"), model);
            self.global_epoch += 1;
            let improved = match &best {
                None => true,
                Some((b, l, _)) => aggregate < *b || (aggregate == *b && val_loss < *l),
            };
            if improved {
                best = Some((aggregate, val_loss, model.clone()));
                phase.best_epoch = Some(epoch);
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= self.cfg.early_stop_patience.max(1) {
                    phase.stopped_early = true;
                    break;
                }
            }
        }
        if let Some((_, _, m)) = best {
            *model = m;
        }
        self.history.phases.push(phase);
        Ok(())
    }

    fn finish(self, model: &mut MlaeModel) -> Result<TrainHistory> {
        model.record_training(self.cfg.train_snr_db, self.cfg.seed, self.history.steps);
        model.set_active_levels(LevelSet::first(model.code().num_levels)?)?;
        Ok(self.history)
    }
}

fn divergence(e: Error, epoch: usize) -> Error {
    match e {
        Error::Nn(NnError::NonFinite(what)) => Error::Divergence {
            epoch,
            detail: format!("non-finite {what}"),
        },
        Error::DegenerateEncoder => Error::Divergence {
            epoch,
            detail: "encoder output power collapsed to zero".into(),
        },
        other => other,
    }
}

fn joint_phase(model: &MlaeModel, cfg: &TrainConfig) -> Result<PhaseSpec> {
    let levels = model.code().num_levels;
    Ok(PhaseSpec {
        name: "joint".into(),
        active: LevelSet::first(levels)?,
        trainable: vec![true; levels],
        weights: cfg.weights(levels),
        epochs: cfg.epochs,
    })
}

/// Trains every level together for `cfg.epochs` epochs (with early
/// stopping), restores the best validation epoch and calibrates the full
/// level set.
pub fn train_joint(model: &mut MlaeModel, cfg: &TrainConfig) -> Result<TrainHistory> {
    train_joint_observed(model, cfg, &mut |_, _| {})
}

pub fn train_joint_observed<'o>(
    model: &mut MlaeModel,
    cfg: &TrainConfig,
    observer: &'o mut EpochObserver<'o>,
) -> Result<TrainHistory> {
    let mut trainer = Trainer::new(model, cfg, observer)?;
    trainer.run_phase(model, joint_phase(model, cfg)?)?;
    trainer.finish(model)
}

/// One phase per level: phase `l` activates levels `1..=l` and updates only
/// level `l` (earlier levels run in inference mode, untouched). A joint
/// phase of `cfg.epochs` epochs follows; with `cfg.epochs = 0` it is
/// recorded but empty.
pub fn train_stagewise(model: &mut MlaeModel, cfg: &TrainConfig) -> Result<TrainHistory> {
    train_stagewise_observed(model, cfg, &mut |_, _| {})
}

pub fn train_stagewise_observed<'o>(
    model: &mut MlaeModel,
    cfg: &TrainConfig,
    observer: &'o mut EpochObserver<'o>,
) -> Result<TrainHistory> {
    let mut trainer = Trainer::new(model, cfg, observer)?;
    let levels = model.code().num_levels;
    for l in 0..levels {
        let mut trainable = vec![false; l + 1];
        trainable[l] = true;
        let mut weights = vec![0.0; l + 1];
        weights[l] = 1.0;
        trainer.run_phase(
            model,
            PhaseSpec {
                name: format!("stage-{}", l + 1),
                active: LevelSet::first(l + 1)?,
                trainable,
                weights,
                epochs: cfg.stage_epochs,
            },
        )?;
    }
    trainer.run_phase(model, joint_phase(model, cfg)?)?;
    trainer.finish(model)
}

/// Dispatches on `cfg.mode`.
pub fn train(model: &mut MlaeModel, cfg: &TrainConfig) -> Result<TrainHistory> {
    train_observed(model, cfg, &mut |_, _| {})
}

pub fn train_observed<'o>(
    model: &mut MlaeModel,
    cfg: &TrainConfig,
    observer: &'o mut EpochObserver<'o>,
) -> Result<TrainHistory> {
    match cfg.mode {
        TrainMode::Joint => train_joint_observed(model, cfg, observer),
        TrainMode::StagewiseThenJoint => train_stagewise_observed(model, cfg, observer),
    }
}

#[cfg(test)]
mod tests;
