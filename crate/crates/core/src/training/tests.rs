use std::collections::HashSet;

use super::*;
use crate::mlae::{ArchConfig, CodeConfig};

fn micro_model(levels: usize, seed: u64) -> MlaeModel {
    MlaeModel::new(CodeConfig::micro(levels), ArchConfig::default(), seed).unwrap()
}

fn quick(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        stage_epochs: epochs,
        repetitions: 4,
        val_messages: 64,
        early_stop_patience: 100,
        ..TrainConfig::micro()
    }
}

fn grads_zero(net: &crate::nn::Network<f32>) -> bool {
    net.params().iter().all(|p| p.grad.iter().all(|&g| g == 0.0))
}

#[test]
fn learning_rate_follows_schedule() {
    let mut m = micro_model(1, 1);
    let h = train_joint(&mut m, &quick(6)).unwrap();
    assert_eq!(h.records.len(), 6);
    for r in &h.records {
        assert!((r.lr - 0.001 * 0.97f64.powi(r.epoch as i32)).abs() < 1e-18);
    }
    assert!(h.records.windows(2).all(|w| w[1].lr <= w[0].lr));
}

#[test]
fn weighted_loss_gradient_flow() {
    let mut m = micro_model(2, 3);
    let bits: Vec<Tensor<f32>> = [0u64, 7]
        .iter()
        .map(|&s| bits_tensor(&(0..32).map(|i| (i * 5 + s) % 16).collect::<Vec<_>>(), 4))
        .collect();
    let plan = StepPlan {
        levels: &[0, 1],
        trainable: &[true, true],
        weights: &[1.0, 0.0],
        teacher_forcing: true,
        channel: ChannelConfig::new(1.0, 6.0).unwrap(),
    };
    let out = accumulate_gradients(&mut m, &plan, &bits, &mut RngStream::new(0, 0).rng()).unwrap();
    assert!(out.loss.is_finite() && out.batch_power > 0.0);
    assert_eq!(out.level_losses.len(), 2);
    assert!(!grads_zero(m.encoder(0)));
    assert!(!grads_zero(m.decoder(0)));
    assert!(grads_zero(m.decoder(1)));
    // Level 2's signal is interference at decoder 1 and shares the power
    // normalization, so its encoder still receives a gradient.
    assert!(!grads_zero(m.encoder(1)));
}

#[test]
fn frozen_levels_receive_no_gradient() {
    let mut m = micro_model(2, 4);
    let bits: Vec<Tensor<f32>> = (0..2).map(|_| bits_tensor(&(0..16).collect::<Vec<_>>(), 4)).collect();
    let plan = StepPlan {
        levels: &[0, 1],
        trainable: &[false, true],
        weights: &[0.0, 1.0],
        teacher_forcing: true,
        channel: ChannelConfig::new(1.0, 6.0).unwrap(),
    };
    accumulate_gradients(&mut m, &plan, &bits, &mut RngStream::new(0, 0).rng()).unwrap();
    assert!(grads_zero(m.encoder(0)) && grads_zero(m.decoder(0)));
    assert!(!grads_zero(m.encoder(1)) && !grads_zero(m.decoder(1)));
}

#[test]
fn decision_feedback_step_runs() {
    let mut m = micro_model(2, 5);
    let cfg = TrainConfig {
        teacher_forcing: false,
        ..quick(1)
    };
    let h = train_joint(&mut m, &cfg).unwrap();
    assert!(h.records[0].loss.is_finite());
}

#[test]
fn normalization_gradient_matches_finite_differences() {
    // Single level, so no detached subtraction path: the loss is a plain
    // function of the encoder parameters through the batch power scale.
    let m = micro_model(1, 6);
    let bits = vec![bits_tensor(&(0..16).collect::<Vec<_>>(), 4)];
    let plan = StepPlan {
        levels: &[0],
        trainable: &[true],
        weights: &[1.0],
        teacher_forcing: true,
        channel: ChannelConfig::noiseless(),
    };
    let loss_at = |mut m: MlaeModel| {
        accumulate_gradients(&mut m, &plan, &bits, &mut RngStream::new(0, 0).rng())
            .unwrap()
            .loss
    };
    let mut probe = m.clone();
    accumulate_gradients(&mut probe, &plan, &bits, &mut RngStream::new(0, 0).rng()).unwrap();
    let last = probe.encoder(0).params().len() - 1;
    let analytic = probe.encoder(0).params()[last].grad.clone();
    let h = 1e-3f32;
    for (c, &a) in analytic.iter().enumerate() {
        let mut plus = m.clone();
        plus.encoder_mut(0).params_mut()[last].value[c] += h;
        let mut minus = m.clone();
        minus.encoder_mut(0).params_mut()[last].value[c] -= h;
        let fd = (loss_at(plus) - loss_at(minus)) / (2.0 * h as f64);
        let a = a as f64;
        assert!((fd - a).abs() <= 0.05 * a.abs().max(1e-3), "channel {c}: fd {fd} vs {a}");
    }
}

#[test]
fn stagewise_freezes_earlier_levels() {
    let mut m = micro_model(2, 7);
    let mut frozen: Option<Vec<Vec<f32>>> = None;
    let mut checked = 0;
    let mut observer = |r: &EpochRecord, model: &MlaeModel| {
        if r.phase == 1 {
            let state: Vec<Vec<f32>> = model
                .encoder(0)
                .state()
                .into_iter()
                .chain(model.decoder(0).state())
                .map(|e| e.data.to_vec())
                .collect();
            match &frozen {
                None => frozen = Some(state),
                Some(f) => {
                    assert_eq!(f, &state);
                    checked += 1;
                }
            }
        }
    };
    let cfg = quick(3);
    let h = train_stagewise_observed(&mut m, &cfg, &mut observer).unwrap();
    assert_eq!(checked, 2);
    assert_eq!(h.phases.len(), 3);
    assert_eq!(h.phases[0].name, "stage-1");
    assert_eq!(h.phases[1].trained_levels, vec![2]);
    assert_eq!(h.phases[2].trained_levels, vec![1, 2]);
    assert_eq!(h.phases[2].first_record, 6);
    assert!(h.records.len() <= 9);
}

#[test]
fn stagewise_level_one_matches_phase_one_best() {
    // Level-1 parameters after phase 2 equal those restored at the end of
    // phase 1, bit for bit.
    let mut m = micro_model(2, 8);
    let cfg = TrainConfig {
        epochs: 0,
        ..quick(2)
    };
    let mut snapshots: Vec<(usize, Vec<f32>)> = Vec::new();
    let mut observer = |r: &EpochRecord, model: &MlaeModel| {
        snapshots.push((r.epoch, model.encoder(0).params()[0].value.clone()));
    };
    let h = train_stagewise_observed(&mut m, &cfg, &mut observer).unwrap();
    let best = h.phases[0].best_epoch.unwrap();
    let kept = &snapshots.iter().find(|s| s.0 == best).unwrap().1;
    assert_eq!(&m.encoder(0).params()[0].value, kept);
    assert_eq!(h.phases.len(), 3);
    assert!(h.phases[2].best_epoch.is_none());
}

#[test]
fn runs_are_deterministic() {
    let run = || {
        let mut m = micro_model(2, 9);
        let h = train_joint(&mut m, &quick(2)).unwrap();
        (h.losses(), m.scale())
    };
    let (a, sa) = run();
    let (b, sb) = run();
    assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    assert_eq!(sa, sb);
}

#[test]
fn every_batch_gets_its_own_noise_stream() {
    let mut m = micro_model(1, 10);
    let h = train_joint(&mut m, &quick(3)).unwrap();
    let mut seen = HashSet::new();
    for r in &h.records {
        for b in 0..r.batches as u64 {
            assert!(seen.insert(r.noise_stream_first + b));
        }
    }
    assert_eq!(seen.len() as u64, h.steps);
    assert_eq!(m.train_steps(), h.steps);
}

#[test]
fn early_stopping_restores_best_epoch() {
    let mut m = micro_model(1, 11);
    let cfg = TrainConfig {
        early_stop_patience: 1,
        lr_initial: 0.01,
        ..quick(8)
    };
    let h = train_joint(&mut m, &cfg).unwrap();
    let best = h.best_val_aggregate_ber().unwrap();
    assert!(h.records.iter().all(|r| r.val_aggregate_ber >= best));
    let (ber, _) = ValidationSet::new(&m, &cfg).unwrap().evaluate(&m).unwrap();
    assert_eq!(ber.iter().sum::<f64>() / ber.len() as f64, best);
}

#[test]
fn non_finite_parameters_abort_as_divergence() {
    let mut m = micro_model(1, 12);
    m.encoder_mut(0).params_mut()[0].value[0] = f32::NAN;
    match train_joint(&mut m, &quick(1)) {
        Err(Error::Divergence { epoch: 0, .. }) => {}
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn invalid_config_is_rejected_before_training() {
    let mut m = micro_model(2, 13);
    let cfg = TrainConfig {
        level_loss_weights: vec![0.0, 0.0],
        ..quick(1)
    };
    assert!(matches!(train_joint(&mut m, &cfg), Err(Error::Config(_))));
    assert_eq!(m.train_steps(), 0);
}

