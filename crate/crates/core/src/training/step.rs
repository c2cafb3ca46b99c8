//! One forward/backward pass through encoders, power normalization, channel
//! and successive decoders.

use rand::Rng;

use crate::channel::{add_awgn, ChannelConfig};
use crate::mlae::{threshold, MlaeModel};
use crate::nn::{bce_loss_logit_grad, AdamState, Mode, NnError, Tensor};
use crate::{Error, Result};

/// Which active levels take gradient steps and how their losses combine.
#[derive(Debug, Clone)]
pub(crate) struct StepPlan<'a> {
    /// Active levels in ascending order.
    pub levels: &'a [usize],
    pub trainable: &'a [bool],
    pub weights: &'a [f64],
    pub teacher_forcing: bool,
    pub channel: ChannelConfig,
}

#[derive(Debug, Clone)]
pub(crate) struct StepOutput {
    pub loss: f64,
    /// Per-level BCE (trainable levels only, in active order).
    pub level_losses: Vec<f64>,
    /// Batch power of the unscaled sum.
    pub batch_power: f64,
}

/// Runs the pipeline for one batch and leaves parameter gradients in place.
///
/// The transmit scale `sqrt(P / p)` uses the batch power `p = mean |s|²` and
/// is differentiated through. Subtracted estimates are detached.
pub(crate) fn accumulate_gradients<R: Rng + ?Sized>(
    model: &mut MlaeModel,
    plan: &StepPlan<'_>,
    bits: &[Tensor<f32>],
    noise_rng: &mut R,
) -> Result<StepOutput> {
    let power = model.power();
    let width = model.code().bits_per_level;
    let (encoders, decoders) = model.networks_mut();
    let batch = bits[0].batch();

    let mut raw = Vec::with_capacity(plan.levels.len());
    for (pos, &level) in plan.levels.iter().enumerate() {
        let u = if plan.trainable[pos] {
            encoders[level].forward(&bits[pos], Mode::Train)?
        } else {
            encoders[level].infer(&bits[pos])?
        };
        raw.push(u);
    }
    let mut sum = raw[0].clone();
    for u in &raw[1..] {
        sum.add_assign(u)?;
    }
    let count = sum.len() / 2;
    let energy: f64 = sum.data().iter().map(|&v| v as f64 * v as f64).sum();
    let batch_power = energy / count as f64;
    if !(batch_power > 0.0) || !batch_power.is_finite() {
        return Err(Error::DegenerateEncoder);
    }
    let scale = (power / batch_power).sqrt();
    let mut y = sum.scale(scale as f32);
    add_awgn(y.data_mut(), &plan.channel, noise_rng);

    let mut predictions = Vec::new();
    let mut targets = Vec::new();
    let mut weights = Vec::new();
    let mut trained_levels = Vec::new();
    let mut residual = y;
    for (pos, &level) in plan.levels.iter().enumerate() {
        let soft = if plan.trainable[pos] {
            Some(decoders[level].forward(&residual, Mode::Train)?)
        } else if !plan.teacher_forcing {
            Some(decoders[level].infer(&residual)?)
        } else {
            None
        };
        if pos + 1 < plan.levels.len() {
            let estimate = if plan.teacher_forcing {
                raw[pos].scale(scale as f32)
            } else {
                let hard = threshold(soft.as_ref().expect("decoded").data());
                let hard = Tensor::new(vec![batch, width, 1], hard.into_iter().map(f32::from).collect())?;
                encoders[level].infer(&hard)?.scale(scale as f32)
            };
            residual = residual.sub(&estimate)?;
        }
        if plan.trainable[pos] {
            predictions.push(soft.expect("trainable level decoded"));
            targets.push(bits[pos].clone());
            weights.push(plan.weights[pos]);
            trained_levels.push(level);
        }
    }

    let bce = bce_loss_logit_grad(&predictions, &targets, &weights)?;
    let mut dy: Option<Tensor<f32>> = None;
    for (&level, g) in trained_levels.iter().zip(&bce.grads) {
        let dr = decoders[level].backward_logits(g)?;
        match dy.as_mut() {
            None => dy = Some(dr),
            Some(acc) => acc.add_assign(&dr)?,
        }
    }
    let dx = dy.expect("at least one trainable level");

    // x = scale(s)·s with scale = sqrt(P / (Σ s² / N)):
    // ds = scale·dx - scale / (p·N) · (Σ dx∘s) · s
    let dot: f64 = dx
        .data()
        .iter()
        .zip(sum.data())
        .map(|(&g, &s)| g as f64 * s as f64)
        .sum();
    let k = scale * dot / (batch_power * count as f64);
    let ds_data = dx
        .data()
        .iter()
        .zip(sum.data())
        .map(|(&g, &s)| (scale * g as f64 - k * s as f64) as f32)
        .collect();
    let ds = Tensor::new(sum.shape().to_vec(), ds_data)?;
    for (pos, &level) in plan.levels.iter().enumerate() {
        if plan.trainable[pos] {
            encoders[level].backward(&ds)?;
        }
    }
    Ok(StepOutput {
        loss: bce.loss,
        level_losses: bce.level_losses,
        batch_power,
    })
}

/// Adam state for every encoder and decoder.
#[derive(Debug, Clone)]
pub(crate) struct Optimizers {
    encoders: Vec<AdamState<f32>>,
    decoders: Vec<AdamState<f32>>,
}

impl Optimizers {
    pub fn new(levels: usize, lr: f64) -> Self {
        Self {
            encoders: (0..levels).map(|_| AdamState::new(lr)).collect(),
            decoders: (0..levels).map(|_| AdamState::new(lr)).collect(),
        }
    }

    /// Steps the trainable levels and clears every gradient.
    pub fn apply(&mut self, model: &mut MlaeModel, plan: &StepPlan<'_>, lr: f64) -> std::result::Result<(), NnError> {
        let (encoders, decoders) = model.networks_mut();
        for (pos, &level) in plan.levels.iter().enumerate() {
            if !plan.trainable[pos] {
                continue;
            }
            for (opt, net) in [
                (&mut self.encoders[level], &mut encoders[level]),
                (&mut self.decoders[level], &mut decoders[level]),
            ] {
                opt.learning_rate = lr;
                opt.step(&mut net.params_mut())?;
                net.zero_grad();
                net.clear_cache();
            }
        }
        Ok(())
    }
}
