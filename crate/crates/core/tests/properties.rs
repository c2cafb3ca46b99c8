//! Randomized invariants across the layers, channel, model, training data,
//! evaluation harness and baselines.

use mlae::baselines::{ml_decode_oracle, Codebook};
use mlae::channel::{add_awgn, ChannelConfig, ComplexSignal, RngStream};
use mlae::evaluation::{self, evaluate_level_traced, BpskCodec, EvalConfig, LOW_CONFIDENCE_ERRORS};
use mlae::mlae::{bits_tensor, ArchConfig, CodeConfig, LevelSet, MlaeModel};
use mlae::nn::{Activation, LayerSpec, Mode, Network, Padding, Tensor};
use mlae::training::{generate_dataset, TrainConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn normal_tensor(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.sample(StandardNormal))
}

/// Largest mismatch between backpropagated and central-difference gradients
/// of `Σ r·net(x)` over every parameter and input entry: relative where the
/// gradient is at least 1e-6, absolute below that (structural zeros, e.g. a
/// bias feeding batch norm, where the difference quotient is pure roundoff).
fn max_gradient_error(specs: &[LayerSpec], shape: Vec<usize>, seed: u64) -> (f64, f64) {
    const H: f64 = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Network::<f64>::from_specs(specs, &mut rng).unwrap();
    let x = normal_tensor(shape, &mut rng);
    let out_shape = net.output_shapes(x.shape()).unwrap().pop().unwrap();
    let r = normal_tensor(out_shape, &mut rng);
    let loss = |net: &Network<f64>, x: &Tensor<f64>| -> f64 {
        let mut n = net.clone();
        let y = n.forward(x, Mode::Train).unwrap();
        y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
    };
    net.forward(&x, Mode::Train).unwrap();
    let gx = net.backward(&r).unwrap();

    let (mut worst, mut worst_tiny) = (0.0f64, 0.0f64);
    let mut record = |a: f64, f: f64| {
        let scale = a.abs().max(f.abs());
        if scale < 1e-6 {
            worst_tiny = worst_tiny.max((a - f).abs());
        } else {
            worst = worst.max((a - f).abs() / scale);
        }
    };
    for t in 0..net.params().len() {
        for i in 0..net.params()[t].value.len() {
            let mut plus = net.clone();
            plus.params_mut()[t].value[i] += H;
            let mut minus = net.clone();
            minus.params_mut()[t].value[i] -= H;
            let fd = (loss(&plus, &x) - loss(&minus, &x)) / (2.0 * H);
            record(net.params()[t].grad[i], fd);
        }
    }
    for i in 0..x.len() {
        let mut plus = x.clone();
        plus.data_mut()[i] += H;
        let mut minus = x.clone();
        minus.data_mut()[i] -= H;
        let fd = (loss(&net, &plus) - loss(&net, &minus)) / (2.0 * H);
        record(gx.data()[i], fd);
    }
    (worst, worst_tiny)
}

fn smooth_activation() -> impl Strategy<Value = Activation> {
    prop_oneof![Just(Activation::Elu), Just(Activation::Sigmoid), Just(Activation::Linear)]
}

fn narrow() -> ArchConfig {
    ArchConfig {
        encoder_bit_filters: 6,
        encoder_symbol_filters: 5,
        decoder_front_filters: 5,
        decoder_back_filters: 6,
        ..ArchConfig::default()
    }
}

fn model_with_levels(levels: usize, seed: u64) -> MlaeModel {
    MlaeModel::new(CodeConfig::new(4, levels, 16).unwrap(), narrow(), seed).unwrap()
}

fn subset_strategy(levels: usize) -> impl Strategy<Value = LevelSet> {
    (1u32..1 << levels).prop_map(move |mask| LevelSet::new((0..levels).filter(|i| mask >> i & 1 == 1).collect()).unwrap())
}

fn random_bits(model: &MlaeModel, batch: usize, rng: &mut ChaCha8Rng) -> Vec<Tensor<f32>> {
    let width = model.code().bits_per_level;
    (0..model.active_levels().len())
        .map(|_| {
            let idx: Vec<u64> = (0..batch).map(|_| rng.gen_range(0..1u64 << width)).collect();
            bits_tensor(&idx, width)
        })
        .collect()
}

fn network_state(model: &MlaeModel) -> Vec<Vec<f32>> {
    (0..model.code().num_levels)
        .flat_map(|l| {
            model
                .encoder(l)
                .state()
                .into_iter()
                .chain(model.decoder(l).state())
                .map(|e| e.data.to_vec())
                .collect::<Vec<_>>()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn conv_gradients_match_finite_differences(
        kernel in 1usize..4,
        in_channels in 1usize..4,
        out_channels in 1usize..4,
        stride in 1usize..3,
        causal in any::<bool>(),
        activation in smooth_activation(),
        extra_len in 0usize..4,
        seed in any::<u64>(),
    ) {
        let len = kernel + extra_len;
        let spec = LayerSpec::Conv1d {
            kernel,
            in_channels,
            out_channels,
            stride,
            padding: if causal { Padding::SameCausal } else { Padding::Valid },
            activation,
        };
        let (rel, tiny) = max_gradient_error(&[spec], vec![2, len, in_channels], seed);
        prop_assert!(rel < 1e-4 && tiny < 1e-8, "relative error {}, absolute error {}", rel, tiny);
    }

    #[test]
    fn batchnorm_gradients_match_finite_differences(
        batch in 2usize..5,
        len in 1usize..4,
        channels in 1usize..4,
        seed in any::<u64>(),
    ) {
        let specs = [
            LayerSpec::Conv1d {
                kernel: 1,
                in_channels: channels,
                out_channels: channels,
                stride: 1,
                padding: Padding::Valid,
                activation: Activation::Linear,
            },
            LayerSpec::BatchNorm1d { channels, momentum: 0.1, epsilon: 1e-5 },
            LayerSpec::Conv1d {
                kernel: 1,
                in_channels: channels,
                out_channels: 2,
                stride: 1,
                padding: Padding::Valid,
                activation: Activation::Sigmoid,
            },
        ];
        let (rel, tiny) = max_gradient_error(&specs, vec![batch, len, channels], seed);
        prop_assert!(rel < 1e-4 && tiny < 1e-8, "relative error {}, absolute error {}", rel, tiny);
    }

    #[test]
    fn batchnorm_standardizes_each_channel(
        batch in 2usize..6,
        len in 1usize..5,
        channels in 1usize..5,
        shift in -5.0f64..5.0,
        spread in 0.5f64..4.0,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor::from_fn(vec![batch, len, channels], |_| shift + spread * rng.sample::<f64, _>(StandardNormal));
        let spec = LayerSpec::BatchNorm1d { channels, momentum: 0.1, epsilon: 1e-5 };
        let mut net = Network::<f64>::from_specs(&[spec], &mut rng).unwrap();
        let y = net.forward(&x, Mode::Train).unwrap();
        let count = (batch * len) as f64;
        for c in 0..channels {
            let column = |t: &Tensor<f64>| -> Vec<f64> { t.data().iter().skip(c).step_by(channels).copied().collect() };
            let xs = column(&x);
            let mx = xs.iter().sum::<f64>() / count;
            let vx = xs.iter().map(|v| (v - mx) * (v - mx)).sum::<f64>() / count;
            let ys = column(&y);
            let my = ys.iter().sum::<f64>() / count;
            let vy = ys.iter().map(|v| (v - my) * (v - my)).sum::<f64>() / count;
            prop_assert!(my.abs() < 1e-9);
            prop_assert!((vy - vx / (vx + 1e-5)).abs() < 1e-9);
        }
    }

    #[test]
    fn noise_streams_are_reproducible(seed in any::<u64>(), index in any::<u64>(), snr in -10.0f64..20.0) {
        let cfg = ChannelConfig::new(1.0, snr).unwrap();
        let draw = |index: u64| {
            let mut v = vec![0.0f32; 64];
            add_awgn(&mut v, &cfg, &mut RngStream::new(seed, index).rng());
            v
        };
        prop_assert_eq!(draw(index), draw(index));
        prop_assert_ne!(draw(index), draw(index ^ 1));
    }

    #[test]
    fn snr_round_trips_through_n0(snr in -30.0f64..60.0, power in 0.01f64..100.0) {
        let cfg = ChannelConfig::new(power, snr).unwrap();
        prop_assert!((cfg.snr_db_from_n0() - snr).abs() < 1e-12);
    }

    #[test]
    fn superposition_is_the_scaled_sum(subset in subset_strategy(3), seed in any::<u64>()) {
        let mut model = model_with_levels(3, seed);
        model.set_active_levels(subset.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bits = random_bits(&model, 8, &mut rng);
        let x = model.encode_batch(&bits).unwrap();
        let mut sum: Vec<f32> = vec![0.0; x.len()];
        for (k, (&level, b)) in subset.indices().iter().zip(&bits).enumerate() {
            let u = model.encoder(level).infer(b).unwrap();
            for (s, v) in sum.iter_mut().zip(u.data()) {
                *s = if k == 0 { *v } else { *s + v };
            }
        }
        let scale = model.scale().unwrap();
        let expected: Vec<f32> = sum.iter().map(|v| v * scale).collect();
        prop_assert_eq!(x.data(), &expected[..]);
    }

    #[test]
    fn residuals_peel_off_each_decision(subset in subset_strategy(3), seed in any::<u64>(), snr in -5.0f64..15.0) {
        let mut model = model_with_levels(3, seed);
        model.set_active_levels(subset.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bits = random_bits(&model, 8, &mut rng);
        let mut y = model.encode_batch(&bits).unwrap();
        add_awgn(y.data_mut(), &ChannelConfig::new(1.0, snr).unwrap(), &mut rng);
        let d = model.decode_batch(&y).unwrap();
        prop_assert_eq!(d.residuals.len(), subset.len() + 1);
        let scale = model.scale().unwrap();
        for (i, &level) in subset.indices().iter().enumerate() {
            let hard = Tensor::new(vec![8, 4, 1], d.hard[i].iter().map(|&b| b as f32).collect()).unwrap();
            let estimate = model.encoder(level).infer(&hard).unwrap();
            let (before, after) = (&d.residuals[i], &d.residuals[i + 1]);
            for ((r0, r1), e) in before.data().iter().zip(after.data()).zip(estimate.data()) {
                prop_assert_eq!(*r1, r0 - scale * e);
                let rebuilt = r1 + scale * e;
                prop_assert!((rebuilt - r0).abs() <= 4.0 * f32::EPSILON * r0.abs().max(scale * e.abs()));
            }
        }
    }

    #[test]
    fn level_subsets_set_rate_and_keep_parameters(subset in subset_strategy(4), seed in 0u64..4) {
        let mut model = model_with_levels(4, seed);
        let before = network_state(&model);
        model.set_active_levels(subset.clone()).unwrap();
        prop_assert_eq!(model.rate(), (4 * subset.len()) as f64 / 16.0);
        prop_assert_eq!(network_state(&model), before);
    }

    #[test]
    fn epochs_cover_every_pattern_repetition_times(bits in 1usize..9, reps in 1usize..5, seed in any::<u64>()) {
        let data = generate_dataset(bits, reps).unwrap();
        let order = data.shuffled(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut counts = vec![0usize; 1 << bits];
        for m in order {
            counts[m as usize] += 1;
        }
        prop_assert!(counts.iter().all(|&c| c == reps));
    }

    #[test]
    fn learning_rate_never_increases(lr in 1e-6f64..1.0, decay in 0.01f64..=1.0, epochs in 1usize..200) {
        let cfg = TrainConfig { lr_initial: lr, lr_decay: decay, ..TrainConfig::default() };
        for e in 1..epochs {
            prop_assert!(cfg.learning_rate(e) <= cfg.learning_rate(e - 1));
        }
    }

    #[test]
    fn counts_do_not_depend_on_chunks_or_threads(
        bits in 1usize..7,
        trials in 1u64..24,
        chunk_size in 1usize..300,
        threads in 1usize..5,
        snr in -3.0f64..6.0,
        seed in any::<u64>(),
    ) {
        let codec = BpskCodec::new(bits, 1.0).unwrap();
        let base = EvalConfig { snr_db: snr, trials_per_codeword: trials, seed, ..EvalConfig::default() };
        let varied = EvalConfig { chunk_size, threads, ..base.clone() };
        prop_assert_eq!(evaluation::evaluate(&codec, &base).unwrap(), evaluation::evaluate(&codec, &varied).unwrap());
    }

    #[test]
    fn exhaustive_counts_are_exact(bits in 1usize..8, trials in 1u64..16, snr in -5.0f64..8.0, seed in any::<u64>()) {
        let codec = BpskCodec::new(bits, 1.0).unwrap();
        let cfg = EvalConfig { snr_db: snr, trials_per_codeword: trials, seed, ..EvalConfig::default() };
        let (report, per_message) = evaluate_level_traced(&codec, 0, &cfg).unwrap();
        prop_assert_eq!(per_message.len(), 1 << bits);
        prop_assert!(per_message.iter().all(|&c| c == trials));
        prop_assert_eq!(report.frames_tested, (1u64 << bits) * trials);
        prop_assert_eq!(report.bits_tested, bits as u64 * report.frames_tested);
        prop_assert_eq!(report.ber(), report.bit_errors as f64 / report.bits_tested as f64);
        prop_assert!((0.0..=1.0).contains(&report.ber()) && (0.0..=1.0).contains(&report.fer()));
        prop_assert!(report.frame_errors <= report.frames_tested && report.frame_errors <= report.bit_errors);
        prop_assert_eq!(report.low_confidence(), report.bit_errors < LOW_CONFIDENCE_ERRORS);
    }

    #[test]
    fn csv_round_trips_reports(snrs in prop::collection::vec(-4.0f64..8.0, 1..4), seed in any::<u64>()) {
        let codec = BpskCodec::new(4, 1.0).unwrap();
        let reports: Vec<_> = snrs
            .iter()
            .map(|&snr_db| {
                let cfg = EvalConfig { snr_db, trials_per_codeword: 8, seed, ..EvalConfig::default() };
                evaluation::evaluate(&codec, &cfg).unwrap()
            })
            .collect();
        let text = evaluation::csv::to_string(&reports).unwrap();
        prop_assert_eq!(evaluation::csv::read_reports(text.as_bytes()).unwrap(), reports);
    }

    #[test]
    fn oracle_recovers_noiseless_codewords(bits in 1usize..7, n in 1usize..6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let signals: Vec<ComplexSignal> = (0..1 << bits)
            .map(|_| ComplexSignal::from_interleaved((0..2 * n).map(|_| rng.sample(StandardNormal)).collect()))
            .collect();
        let codebook = Codebook::new(bits, signals).unwrap();
        for m in 0..1u64 << bits {
            let decided = ml_decode_oracle(&codebook, codebook.codeword(m)).unwrap();
            // Distinct Gaussian codewords: only an exact duplicate could tie.
            prop_assert_eq!(codebook.codeword(decided), codebook.codeword(m));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(3))]

    #[test]
    fn noise_statistics_hold_for_any_seed(seed in any::<u64>(), index in any::<u64>()) {
        let cfg = ChannelConfig::new(1.0, 0.0).unwrap();
        let n = 1_000_000usize;
        let mut v = vec![0.0f32; 2 * n];
        add_awgn(&mut v, &cfg, &mut RngStream::new(seed, index).rng());
        let (mut s, mut ss, mut cross) = ([0.0f64; 2], [0.0f64; 2], 0.0f64);
        for p in v.chunks_exact(2) {
            let (a, b) = (p[0] as f64, p[1] as f64);
            s[0] += a;
            s[1] += b;
            ss[0] += a * a;
            ss[1] += b * b;
            cross += a * b;
        }
        let nf = n as f64;
        let mean = [s[0] / nf, s[1] / nf];
        let var = [ss[0] / nf - mean[0] * mean[0], ss[1] / nf - mean[1] * mean[1]];
        let corr = (cross / nf - mean[0] * mean[1]) / (var[0] * var[1]).sqrt();
        for c in 0..2 {
            prop_assert!((0.495..=0.505).contains(&var[c]), "variance {}", var[c]);
            prop_assert!(mean[c].abs() < 0.005);
        }
        prop_assert!(corr.abs() < 0.01);
    }
}
