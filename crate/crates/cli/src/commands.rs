use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use mlae::baselines::{bpsk_uncoded_ber_analytic, bpsk_uncoded_ber_mc, Codebook};
use mlae::channel::{RngStream, GAUSSIAN_METHOD, RNG_ALGORITHM};
use mlae::evaluation::csv::{read_rows_from, report_rows, write_csv, write_rows_to, Row};
use mlae::evaluation::svg::{series_from_reports, series_from_rows, write_svg};
use mlae::evaluation::{aggregate, evaluate, sweep, LevelReport};
use mlae::mlae::{load_checkpoint, save_checkpoint, LevelSet, MlaeModel};
use mlae::training::{train_observed, EpochRecord};
use serde_json::json;

use crate::config::Config;
use crate::manifest::{artifact, unix_now, Invocation, RunManifest, SeedRecord};
use crate::CliError;

pub struct Request {
    pub invocation: Invocation,
    pub config: Config,
}

struct Outcome {
    artifacts: Vec<PathBuf>,
    timings: serde_json::Value,
}

pub fn execute(req: Request) -> Result<(), CliError> {
    let started = unix_now();
    let clock = Instant::now();
    let out = &req.invocation.out_dir;
    fs::create_dir_all(out)?;
    let outcome = match req.invocation.command.as_str() {
        "train" => train(&req.config, out)?,
        "evaluate" => evaluate_cmd(&req.config, checkpoint(&req)?, out)?,
        "sweep" => sweep_cmd(&req.config, checkpoint(&req)?, &req.invocation.overlays, out)?,
        "baseline" => baseline(&req.config, out)?,
        "export-codebook" => export_codebook(&req.config, checkpoint(&req)?, out)?,
        other => return Err(CliError::Config(format!("unknown command {other:?}"))),
    };
    let cfg = &req.config;
    let manifest = RunManifest {
        tool: "mlae".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        invocation: req.invocation.clone(),
        config: cfg.to_toml(),
        seeds: SeedRecord {
            init: cfg.model.init_seed,
            train: cfg.train.seed,
            eval: cfg.eval.seed,
            baseline: cfg.baseline.seed,
            rng: RNG_ALGORITHM.into(),
            gaussian: GAUSSIAN_METHOD.into(),
        },
        artifacts: outcome
            .artifacts
            .iter()
            .map(|p| artifact(p))
            .collect::<Result<_, _>>()?,
        started_unix_s: started,
        finished_unix_s: unix_now(),
        wall_clock_s: clock.elapsed().as_secs_f64(),
        timings: outcome.timings,
    };
    let path = manifest.write(out)?;
    for a in &outcome.artifacts {
        eprintln!("wrote {}", a.display());
    }
    eprintln!("wrote {}", path.display());
    Ok(())
}

pub fn replay(path: &Path, out: Option<PathBuf>) -> Result<(), CliError> {
    let m = RunManifest::read(path)?;
    let mut invocation = m.invocation;
    if let Some(o) = out {
        invocation.out_dir = o;
    }
    execute(Request {
        invocation,
        config: Config::from_toml(&m.config)?,
    })
}

fn checkpoint(req: &Request) -> Result<&Path, CliError> {
    req.invocation
        .checkpoint
        .as_deref()
        .ok_or_else(|| CliError::Config(format!("{} needs --checkpoint", req.invocation.command)))
}

fn load(cfg: &Config, path: &Path) -> Result<MlaeModel, CliError> {
    let mut model = load_checkpoint(path)?;
    let subset = match cfg.eval_levels()? {
        Some(s) => s,
        None => model.active_levels().clone(),
    };
    model.set_active_levels(subset)?;
    Ok(model)
}

/// History log line: the epoch record without its wall-clock time, so logs
/// of equal runs are byte-identical.
fn log_line(r: &EpochRecord) -> String {
    let mut v = serde_json::to_value(r).expect("epoch record serializes");
    if let Some(o) = v.as_object_mut() {
        o.remove("wall_clock_s");
    }
    v.to_string()
}

fn train(cfg: &Config, out: &Path) -> Result<Outcome, CliError> {
    let mut model = MlaeModel::new(cfg.code, cfg.arch.clone(), cfg.model.init_seed)?;
    let history_path = out.join("history.jsonl");
    let mut log = fs::File::create(&history_path)?;
    let mut io_error = None;
    let mut observer = |r: &EpochRecord, _: &MlaeModel| {
        eprintln!(
            "epoch {:>3}  phase {}  loss {:.5}  lr {:.3e}  val ber {:.3e}",
            r.epoch, r.phase, r.loss, r.lr, r.val_aggregate_ber
        );
        if let Err(e) = writeln!(log, "{}", log_line(r)).and_then(|_| log.flush()) {
            io_error.get_or_insert(e);
        }
    };
    let history = train_observed(&mut model, &cfg.train, &mut observer)?;
    if let Some(e) = io_error {
        return Err(e.into());
    }
    let ckpt = out.join("model.mlae");
    save_checkpoint(&model, &ckpt)?;
    Ok(Outcome {
        artifacts: vec![ckpt, history_path],
        timings: json!({
            "epoch_wall_clock_s": history.records.iter().map(|r| r.wall_clock_s).collect::<Vec<_>>(),
            "steps": history.steps,
            "phases": history.phases,
        }),
    })
}

fn evaluate_cmd(cfg: &Config, ckpt: &Path, out: &Path) -> Result<Outcome, CliError> {
    let model = load(cfg, ckpt)?;
    let clock = Instant::now();
    let report = evaluate(&model, &cfg.eval_config()?)?;
    let path = out.join("eval.csv");
    write_csv(std::slice::from_ref(&report), &path)?;
    eprintln!(
        "levels {}  rate {}  snr {} dB  aggregate ber {:.4e}{}",
        report.active_levels,
        report.rate,
        report.snr_db,
        report.aggregate_ber,
        if report.low_confidence() { "  (low confidence)" } else { "" }
    );
    Ok(Outcome {
        artifacts: vec![path],
        timings: json!({ "evaluation_s": clock.elapsed().as_secs_f64() }),
    })
}

fn sweep_cmd(cfg: &Config, ckpt: &Path, overlays: &[PathBuf], out: &Path) -> Result<Outcome, CliError> {
    let mut model = load(cfg, ckpt)?;
    let subsets = cfg
        .sweep
        .subset_sizes
        .iter()
        .map(|&k| LevelSet::first(k).map_err(CliError::from))
        .collect::<Result<Vec<_>, _>>()?;
    let clock = Instant::now();
    let reports = sweep(&mut model, &cfg.sweep.snr_list, &subsets, &cfg.eval_config()?)?;
    let csv_path = out.join("sweep.csv");
    write_csv(&reports, &csv_path)?;
    let mut series = series_from_reports(&reports);
    for o in overlays {
        let name = o
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "overlay".into());
        series.extend(series_from_rows(&read_rows_from(o)?, &name));
    }
    let mut artifacts = vec![csv_path];
    if series.iter().any(|s| !s.points.is_empty()) {
        let svg_path = out.join("sweep.svg");
        write_svg(&series, &svg_path)?;
        artifacts.push(svg_path);
    } else {
        eprintln!("nothing to plot; sweep.svg not written");
    }
    Ok(Outcome {
        artifacts,
        timings: json!({ "evaluation_s": clock.elapsed().as_secs_f64() }),
    })
}

fn baseline(cfg: &Config, out: &Path) -> Result<Outcome, CliError> {
    let b = &cfg.baseline;
    let rows: Vec<Row> = match b.kind.as_str() {
        "bpsk-analytic" => b
            .snr_list
            .iter()
            .map(|&s| Row::analytic(s, 1.0, bpsk_uncoded_ber_analytic(s)))
            .collect(),
        "bpsk-mc" => {
            let mut reports = Vec::new();
            for (i, &snr) in b.snr_list.iter().enumerate() {
                let mut rng = RngStream::new(b.seed, i as u64).rng();
                let c = bpsk_uncoded_ber_mc(snr, b.trials, &mut rng)?;
                reports.push(aggregate(&[LevelReport {
                    level: 1,
                    snr_db: snr,
                    rate: 1.0,
                    active_levels: LevelSet::first(1)?,
                    bits_tested: c.bits,
                    bit_errors: c.bit_errors,
                    frames_tested: c.bits,
                    frame_errors: c.bit_errors,
                }])?);
            }
            report_rows(&reports)
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown baseline kind {other:?} (expected bpsk-analytic or bpsk-mc)"
            )))
        }
    };
    let path = out.join("baseline.csv");
    write_rows_to(&rows, &path)?;
    Ok(Outcome {
        artifacts: vec![path],
        timings: json!({}),
    })
}

fn export_codebook(cfg: &Config, ckpt: &Path, out: &Path) -> Result<Outcome, CliError> {
    let model = load(cfg, ckpt)?;
    let codebook = Codebook::from_model(&model)?;
    let mut buf = Vec::new();
    codebook.write_csv(&mut buf)?;
    let path = out.join("codebook.csv");
    mlae::write_atomic(&path, &buf)?;
    Ok(Outcome {
        artifacts: vec![path],
        timings: json!({ "average_power": codebook.average_power() }),
    })
}
