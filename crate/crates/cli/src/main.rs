//! `mlae` command-line interface.

mod commands;
mod config;
mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};

use config::Preset;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(mlae::Error),
    Io(std::io::Error),
    Other(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) | CliError::Other(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "{e}"),
        }
    }
}

impl From<mlae::Error> for CliError {
    fn from(e: mlae::Error) -> Self {
        match e {
            mlae::Error::Config(m) => CliError::Config(m),
            e => CliError::Core(e),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<mlae::mlae::CheckpointError> for CliError {
    fn from(e: mlae::mlae::CheckpointError) -> Self {
        CliError::Core(e.into())
    }
}

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_BUDGET: u8 = 3;
pub const EXIT_DIVERGENCE: u8 = 4;

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Core(mlae::Error::Budget { .. }) => EXIT_BUDGET,
            CliError::Core(mlae::Error::Divergence { .. }) => EXIT_DIVERGENCE,
            CliError::Core(mlae::Error::MixedReports(_)) => EXIT_CONFIG,
            _ => 1,
        }
    }
}

/// Multi-level autoencoder: train, evaluate and sweep learned codes over AWGN.
///
/// Configuration keys can be overridden with `--key=value` or
/// `--set key=value`, where `key` is `section.name` or an unambiguous bare
/// name (`--epochs=5`, `--train.lr_initial=0.01`).
#[derive(Debug, Parser)]
#[command(name = "mlae", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML configuration file.
    #[arg(long, env = "MLAE_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Evaluation worker threads; 1 gives bit-reproducible runs.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Configuration override, `key=value` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model; writes model.mlae, history.jsonl and manifest.json.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Exhaustive per-level evaluation of a checkpoint; writes eval.csv.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        snr: Option<String>,
        /// Noise realizations per message.
        #[arg(long)]
        trials: Option<u64>,
        /// Active levels, e.g. 1+2.
        #[arg(long)]
        levels: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Run even when the frame budget is exceeded.
        #[arg(long)]
        force: bool,
    },
    /// BER against rate over SNRs and subset sizes; writes sweep.csv and sweep.svg.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Comma-separated SNRs in dB.
        #[arg(long, allow_hyphen_values = true)]
        snr: Option<String>,
        /// Comma-separated subset sizes k (levels 1..=k).
        #[arg(long)]
        sizes: Option<String>,
        #[arg(long)]
        trials: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// CSV in the report schema drawn as extra dashed series (repeatable).
        #[arg(long)]
        overlay: Vec<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Reference curves (bpsk-analytic or bpsk-mc); writes baseline.csv.
    Baseline {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        kind: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        snr: Option<String>,
        #[arg(long)]
        trials: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Dump every codeword of a small model as CSV; writes codebook.csv.
    ExportCodebook {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        levels: Option<String>,
    },
    /// Re-run the command recorded in a manifest.
    Replay {
        manifest: PathBuf,
        /// Write to this directory instead of the recorded one.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the resolved configuration as TOML.
    ShowConfig {
        #[command(flatten)]
        common: Common,
    },
}

/// Moves `--key=value` arguments that are not flags of the subcommand into
/// the override list.
fn split_overrides(args: Vec<OsString>) -> (Vec<OsString>, Vec<String>) {
    let cmd = Cli::command();
    let sub = args
        .iter()
        .skip(1)
        .filter_map(|a| a.to_str())
        .find(|a| !a.starts_with('-'))
        .and_then(|name| cmd.find_subcommand(name).cloned());
    let Some(sub) = sub else {
        return (args, Vec::new());
    };
    let mut known: Vec<String> = sub
        .get_arguments()
        .filter_map(|a| a.get_long().map(String::from))
        .collect();
    known.extend(["help".into(), "version".into()]);
    let mut kept = Vec::new();
    let mut overrides = Vec::new();
    for a in args {
        match a.to_str().and_then(|s| s.strip_prefix("--")) {
            Some(body) if body.contains('=') && !known.iter().any(|k| body.split('=').next() == Some(k)) => {
                overrides.push(body.to_string());
            }
            _ => kept.push(a),
        }
    }
    (kept, overrides)
}

fn main() -> ExitCode {
    let (args, overrides) = split_overrides(std::env::args_os().collect());
    let cli = Cli::try_parse_from(args).unwrap_or_else(|e| e.exit());
    match run(cli.command, overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn opt(key: &str, v: Option<impl ToString>) -> Option<String> {
    v.map(|v| format!("{key}={}", v.to_string()))
}

fn run(command: Command, mut overrides: Vec<String>) -> Result<(), CliError> {
    use commands::Request;
    let with = |common: &Common, overrides: &mut Vec<String>, extra: Vec<Option<String>>| {
        let mut all = common.set.clone();
        all.append(overrides);
        all.extend(extra.into_iter().flatten());
        all.extend(opt("eval.threads", common.threads));
        all
    };
    let (common, name, checkpoint, overlays, all) = match command {
        Command::Replay { manifest, out } => return commands::replay(&manifest, out),
        Command::ShowConfig { common } => {
            let all = with(&common, &mut overrides, vec![]);
            let cfg = config::resolve(common.preset, common.config.as_deref(), &all)?;
            print!("{}", cfg.to_toml());
            return Ok(());
        }
        Command::Train { common } => {
            let all = with(&common, &mut overrides, vec![]);
            (common, "train", None, Vec::new(), all)
        }
        Command::Evaluate {
            common,
            checkpoint,
            snr,
            trials,
            levels,
            seed,
            force,
        } => {
            let extra = vec![
                opt("eval.snr_db", snr),
                opt("eval.trials_per_codeword", trials),
                opt("eval.levels", levels),
                opt("eval.seed", seed),
                force.then(|| "eval.force=true".to_string()),
            ];
            let all = with(&common, &mut overrides, extra);
            (common, "evaluate", Some(checkpoint), Vec::new(), all)
        }
        Command::Sweep {
            common,
            checkpoint,
            snr,
            sizes,
            trials,
            seed,
            overlay,
            force,
        } => {
            let extra = vec![
                opt("sweep.snr_list", snr),
                opt("sweep.subset_sizes", sizes),
                opt("eval.trials_per_codeword", trials),
                opt("eval.seed", seed),
                force.then(|| "eval.force=true".to_string()),
            ];
            let all = with(&common, &mut overrides, extra);
            (common, "sweep", Some(checkpoint), overlay, all)
        }
        Command::Baseline {
            common,
            kind,
            snr,
            trials,
            seed,
        } => {
            let extra = vec![
                opt("baseline.kind", kind),
                opt("baseline.snr_list", snr),
                opt("baseline.trials", trials),
                opt("baseline.seed", seed),
            ];
            let all = with(&common, &mut overrides, extra);
            (common, "baseline", None, Vec::new(), all)
        }
        Command::ExportCodebook {
            common,
            checkpoint,
            levels,
        } => {
            let all = with(&common, &mut overrides, vec![opt("eval.levels", levels)]);
            (common, "export-codebook", Some(checkpoint), Vec::new(), all)
        }
    };
    let cfg = config::resolve(common.preset, common.config.as_deref(), &all)?;
    commands::execute(Request {
        invocation: manifest::Invocation {
            command: name.to_string(),
            out_dir: common.out,
            checkpoint,
            overlays,
        },
        config: cfg,
    })
}
