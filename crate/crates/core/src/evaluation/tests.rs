use super::csv::{read_reports, read_rows, to_string, write_rows, Row};
use super::svg::{render_svg, series_from_reports, series_from_rows, y_decades, Series};
use super::*;
use crate::baselines::bpsk_uncoded_ber_analytic;
use crate::mlae::{ArchConfig, CodeConfig};

fn small_arch() -> ArchConfig {
    ArchConfig {
        encoder_bit_filters: 8,
        encoder_symbol_filters: 6,
        decoder_front_filters: 6,
        decoder_back_filters: 8,
        ..ArchConfig::default()
    }
}

fn micro(levels: usize) -> MlaeModel {
    let mut m = MlaeModel::new(CodeConfig::micro(levels), small_arch(), 21).unwrap();
    m.set_active_levels(LevelSet::first(levels).unwrap()).unwrap();
    m
}

fn cfg(snr: f64, trials: u64) -> EvalConfig {
    EvalConfig {
        snr_db: snr,
        trials_per_codeword: trials,
        seed: 5,
        ..EvalConfig::default()
    }
}

fn report(level: usize, errors: u64, bits: u64) -> LevelReport {
    LevelReport {
        level,
        snr_db: 0.0,
        rate: 0.5,
        active_levels: "1+2".parse().unwrap(),
        bits_tested: bits,
        bit_errors: errors,
        frames_tested: bits / 16,
        frame_errors: errors.min(bits / 16),
    }
}

#[test]
fn frame_count_is_messages_times_trials() {
    let m = micro(2);
    let r = evaluate_level_exhaustive(&m, 1, &cfg(3.0, 8)).unwrap();
    assert_eq!(r.frames_tested, 16 * 8);
    assert_eq!(r.bits_tested, 4 * r.frames_tested);
    assert!(r.ber() <= 1.0 && r.fer() <= 1.0);
    assert_eq!(r.level, 2);
    assert_eq!(r.rate, 0.5);
}

#[test]
fn full_scale_frame_count_hits_budget_guard() {
    let m = MlaeModel::new(CodeConfig::full(1), small_arch(), 0).unwrap();
    match evaluate_level_exhaustive(&m, 0, &cfg(0.0, 1 << 10)) {
        Err(Error::Budget { frames, budget }) => {
            assert_eq!(frames, 67_108_864);
            assert_eq!(budget, DEFAULT_BUDGET_FRAMES);
        }
        other => panic!("expected budget refusal, got {other:?}"),
    }
}

#[test]
fn forced_runs_pass_the_guard() {
    let m = micro(1);
    let c = EvalConfig {
        budget_frames: 10,
        ..cfg(0.0, 2)
    };
    assert!(matches!(evaluate_level_exhaustive(&m, 0, &c), Err(Error::Budget { frames: 32, .. })));
    let c = EvalConfig { force: true, ..c };
    assert_eq!(evaluate_level_exhaustive(&m, 0, &c).unwrap().frames_tested, 32);
}

#[test]
fn every_message_is_sent_trials_times() {
    let m = micro(2);
    let (_, counts) = evaluate_level_traced(&m, 0, &EvalConfig { chunk_size: 5, ..cfg(0.0, 7) }).unwrap();
    assert_eq!(counts, vec![7; 16]);
}

#[test]
fn counts_do_not_depend_on_chunking_or_threads() {
    let m = micro(2);
    let base = evaluate(&m, &cfg(2.0, 16)).unwrap();
    assert!(base.bit_errors > 0);
    for (chunk, threads) in [(1, 1), (7, 1), (100, 3), (4096, 2), (33, 4)] {
        let c = EvalConfig {
            chunk_size: chunk,
            threads,
            ..cfg(2.0, 16)
        };
        assert_eq!(evaluate(&m, &c).unwrap(), base, "chunk {chunk}, threads {threads}");
    }
}

#[test]
fn inactive_level_is_rejected() {
    let mut m = micro(2);
    m.set_active_levels("1".parse().unwrap()).unwrap();
    assert!(matches!(evaluate_level_exhaustive(&m, 1, &cfg(0.0, 1)), Err(Error::Config(_))));
}

#[test]
fn uncalibrated_model_is_rejected() {
    let m = MlaeModel::new(CodeConfig::micro(1), small_arch(), 0).unwrap();
    assert!(matches!(evaluate(&m, &cfg(0.0, 1)), Err(Error::Uncalibrated(_))));
}

#[test]
fn bpsk_through_the_harness_matches_analytic() {
    let bpsk = BpskCodec::new(8, 1.0).unwrap();
    let r = evaluate(&bpsk, &cfg(0.0, 256)).unwrap();
    let p = bpsk_uncoded_ber_analytic(0.0);
    let sigma = (p * (1.0 - p) / r.bits_tested as f64).sqrt();
    assert!((r.aggregate_ber - p).abs() < 4.0 * sigma, "{} vs {p}", r.aggregate_ber);
    let noiseless = evaluate(&bpsk, &cfg(f64::INFINITY, 4)).unwrap();
    assert_eq!(noiseless.bit_errors, 0);
}

#[test]
fn table_row_aggregates_to_its_mean() {
    // The decimal inputs are not representable in binary; the mean agrees
    // to the printed precision, and exactly when computed from counts.
    assert_eq!(format!("{:.4}", mean_ber(&[0.0027, 0.0035])), "0.0031");
    assert!((mean_ber(&[0.0027, 0.0035]) - 0.0031).abs() < 1e-18);
    let agg = aggregate(&[report(1, 27, 10_000), report(2, 35, 10_000)]).unwrap();
    assert_eq!(agg.aggregate_ber, 0.0031);
    assert_eq!(agg.bit_errors, 62);
}

#[test]
fn aggregate_edge_cases() {
    let single = aggregate(&[report(1, 13, 4000)]).unwrap();
    assert_eq!(single.aggregate_ber, single.levels[0].ber());
    let zero = aggregate(&[report(1, 0, 4000), report(2, 0, 4000)]).unwrap();
    assert_eq!(zero.aggregate_ber, 0.0);
    assert!(zero.low_confidence());
    let uneven = aggregate(&[report(1, 1, 100), report(2, 1, 1000)]).unwrap();
    assert!((uneven.aggregate_ber - 0.0055).abs() < 1e-15);
    assert!(matches!(aggregate(&[]), Err(Error::MixedReports(_))));
    let mut other = report(2, 1, 100);
    other.snr_db = 3.0;
    assert!(matches!(aggregate(&[report(1, 1, 100), other]), Err(Error::MixedReports(_))));
    assert!(matches!(aggregate(&[report(1, 1, 100), report(1, 2, 100)]), Err(Error::MixedReports(_))));
}

#[test]
fn sweep_orders_by_snr_then_rate_and_restores_subset() {
    let mut m = micro(4);
    m.set_active_levels("1+2".parse().unwrap()).unwrap();
    let subsets: Vec<LevelSet> = (1..=4).rev().map(|k| LevelSet::first(k).unwrap()).collect();
    let out = sweep(&mut m, &[2.5, 0.0], &subsets, &cfg(0.0, 1)).unwrap();
    let keys: Vec<(f64, f64)> = out.iter().map(|r| (r.snr_db, r.rate)).collect();
    assert_eq!(
        keys,
        vec![(0.0, 0.25), (0.0, 0.5), (0.0, 0.75), (0.0, 1.0), (2.5, 0.25), (2.5, 0.5), (2.5, 0.75), (2.5, 1.0)]
    );
    assert_eq!(m.active_levels().to_string(), "1+2");
    assert!(sweep(&mut m, &[], &subsets, &cfg(0.0, 1)).unwrap().is_empty());
    let full = CodeConfig::full(5);
    assert_eq!((1..=5).map(|k| full.rate_for(k)).collect::<Vec<_>>(), vec![0.25, 0.5, 0.75, 1.0, 1.25]);
}

#[test]
fn csv_rows_round_trip() {
    let mut m = micro(3);
    let subsets = [LevelSet::first(2).unwrap(), LevelSet::first(3).unwrap()];
    let out = sweep(&mut m, &[0.0, 4.0], &subsets, &cfg(0.0, 2)).unwrap();
    let text = to_string(&out).unwrap();
    // Both subsets of sizes 2 and 3 at two SNRs: levels plus one aggregate row each.
    assert_eq!(text.lines().count(), 1 + 2 * ((2 + 1) + (3 + 1)));
    assert!(text.starts_with(
        "snr_db,rate,active_levels,level,bits_tested,bit_errors,ber,frames_tested,frame_errors,fer,low_confidence\n"
    ));
    let back = read_reports(text.as_bytes()).unwrap();
    assert_eq!(back, out);
    assert_eq!(to_string(&back).unwrap(), text);
}

#[test]
fn csv_is_byte_identical_for_equal_seeds() {
    let m = micro(2);
    let a = to_string(&[evaluate(&m, &cfg(1.0, 4)).unwrap()]).unwrap();
    let b = to_string(&[evaluate(&m, &cfg(1.0, 4)).unwrap()]).unwrap();
    assert_eq!(a, b);
}

#[test]
fn empty_table_is_header_only() {
    assert_eq!(to_string(&[]).unwrap().lines().count(), 1);
}

#[test]
fn inconsistent_aggregate_row_is_rejected() {
    let m = micro(1);
    let text = to_string(&[evaluate(&m, &cfg(0.0, 2)).unwrap()]).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let agg = lines.last_mut().unwrap();
    let mut fields: Vec<String> = agg.split(',').map(String::from).collect();
    fields[5] = (fields[5].parse::<u64>().unwrap() + 1).to_string();
    *agg = fields.join(",");
    assert!(matches!(read_reports(lines.join("\n").as_bytes()), Err(Error::Csv(_))));
    assert!(matches!(read_reports("a,b\n".as_bytes()), Err(Error::Csv(_))));
}

#[test]
fn analytic_rows_leave_counts_empty() {
    let rows = vec![Row::analytic(0.0, 1.0, 0.078_65)];
    let mut buf = Vec::new();
    write_rows(&rows, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().nth(1).unwrap(), "0,1,1,aggregate,,,0.07865,,,,false");
    assert_eq!(read_rows(text.as_bytes()).unwrap(), rows);
}

fn point_series(points: &[(f64, f64)]) -> Vec<Series> {
    vec![Series {
        label: "a".into(),
        points: points.to_vec(),
        dashed: false,
    }]
}

#[test]
fn svg_y_axis_covers_the_data() {
    let s = point_series(&[(0.25, 3e-6), (0.5, 1e-3), (1.0, 0.04)]);
    assert_eq!(y_decades(&s), (-6, 0));
    let svg = render_svg(&s).unwrap();
    for d in -6..=0 {
        assert!(svg.contains(&format!(">1e{d}<")), "missing tick 1e{d}");
    }
    assert_eq!(svg.matches("class=\"ytick\"").count(), 7);
    assert!(svg.starts_with("<?xml") && svg.trim_end().ends_with("</svg>"));
    assert!(!svg.contains("href"));
    assert_eq!(y_decades(&point_series(&[(1.0, 0.0)])), (-6, 0));
    assert_eq!(y_decades(&point_series(&[(1.0, 0.3)])), (-1, 0));
}

#[test]
fn svg_series_per_snr() {
    let mut m = micro(2);
    let subsets = [LevelSet::first(1).unwrap(), LevelSet::first(2).unwrap()];
    let out = sweep(&mut m, &[0.0, 2.5], &subsets, &cfg(0.0, 1)).unwrap();
    let series = series_from_reports(&out);
    assert_eq!(series.len(), 2);
    assert!(series.iter().all(|s| s.points.len() == 2));
    assert_eq!(series[0].label, "SNR 0 dB");
    let single = series_from_reports(&out[..1]);
    assert_eq!(single[0].points.len(), 1);
    render_svg(&single).unwrap();
    let overlay = series_from_rows(&[Row::analytic(0.0, 1.0, 0.0786)], "bpsk");
    let mut all = series.clone();
    all.extend(overlay);
    let svg = render_svg(&all).unwrap();
    assert_eq!(svg.matches("class=\"series\"").count(), 3);
    assert!(svg.contains("stroke-dasharray"));
    assert!(render_svg(&[]).is_err());
}
