//! Layered run configuration: defaults ← preset ← file ← overrides.
//!
//! Files are TOML with one table per section. Overrides are `key=value`
//! where `key` is `section.name` or a bare `name` that occurs in exactly one
//! section; values are parsed as TOML and coerced to the default's type.

use std::path::Path;

use mlae::evaluation::{EvalConfig, DEFAULT_BUDGET_FRAMES, DEFAULT_TRIALS, DESK_TRIALS};
use mlae::mlae::{ArchConfig, CodeConfig, LevelSet};
use mlae::training::TrainConfig;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// B=4, L=2, n=16, small batches, 16 trials per codeword.
    Micro,
    /// B=16, L=4, n=64 with the reference training setup.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSection {
    pub init_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSection {
    pub snr_db: f64,
    pub trials_per_codeword: u64,
    pub seed: u64,
    /// Active levels, e.g. `"1+2"`; empty keeps the checkpoint's.
    pub levels: String,
    pub chunk_size: usize,
    pub threads: usize,
    pub budget_frames: u64,
    pub force: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSection {
    pub snr_list: Vec<f64>,
    /// Subset sizes `k`; each tests levels `1..=k`.
    pub subset_sizes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSection {
    pub kind: String,
    pub snr_list: Vec<f64>,
    pub trials: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub code: CodeConfig,
    pub arch: ArchConfig,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub eval: EvalSection,
    pub sweep: SweepSection,
    pub baseline: BaselineSection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            code: CodeConfig::full(4),
            arch: ArchConfig::default(),
            model: ModelSection { init_seed: 0 },
            train: TrainConfig::default(),
            eval: EvalSection {
                snr_db: 0.0,
                trials_per_codeword: DEFAULT_TRIALS,
                seed: 0,
                levels: String::new(),
                chunk_size: 1024,
                threads: 1,
                budget_frames: DEFAULT_BUDGET_FRAMES,
                force: false,
            },
            sweep: SweepSection {
                snr_list: vec![0.0, 2.5],
                subset_sizes: vec![1, 2, 3, 4],
            },
            baseline: BaselineSection {
                kind: "bpsk-analytic".into(),
                snr_list: vec![0.0, 2.5, 5.0],
                trials: 10_000_000,
                seed: 0,
            },
        }
    }
}

impl Config {
    pub fn preset(preset: Preset) -> Self {
        let base = Self::default();
        match preset {
            Preset::Full => base,
            Preset::Micro => Self {
                code: CodeConfig::micro(2),
                train: TrainConfig::micro(),
                eval: EvalSection {
                    snr_db: 6.0,
                    trials_per_codeword: DESK_TRIALS,
                    ..base.eval
                },
                sweep: SweepSection {
                    snr_list: vec![0.0, 3.0, 6.0],
                    subset_sizes: vec![1, 2],
                },
                ..base
            },
        }
    }

    pub fn eval_config(&self) -> Result<EvalConfig, CliError> {
        let cfg = EvalConfig {
            snr_db: self.eval.snr_db,
            trials_per_codeword: self.eval.trials_per_codeword,
            seed: self.eval.seed,
            levels_under_test: None,
            chunk_size: self.eval.chunk_size,
            threads: self.eval.threads,
            budget_frames: self.eval.budget_frames,
            force: self.eval.force,
            ..EvalConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The configured active subset, if any.
    pub fn eval_levels(&self) -> Result<Option<LevelSet>, CliError> {
        if self.eval.levels.trim().is_empty() {
            return Ok(None);
        }
        self.eval
            .levels
            .parse()
            .map(Some)
            .map_err(|e| CliError::Config(format!("eval.levels: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes to TOML")
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let table: Table = text
            .parse()
            .map_err(|e| CliError::Config(format!("configuration: {e}")))?;
        let defaults = table_of(&Self::default());
        check_keys(&defaults, &table, "")?;
        let mut merged = defaults;
        merge(&mut merged, table);
        finish(merged)
    }
}

fn table_of(cfg: &Config) -> Table {
    match Value::try_from(cfg).expect("configuration converts to TOML") {
        Value::Table(t) => t,
        _ => unreachable!("configuration is a table"),
    }
}

fn finish(table: Table) -> Result<Config, CliError> {
    let cfg: Config = Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
    cfg.code.validate()?;
    cfg.train.validate(cfg.code.num_levels)?;
    Ok(cfg)
}

fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Common misspellings and synonyms mapped to real key names.
const HINTS: &[(&str, &str)] = &[
    ("learningrate", "lr_initial"),
    ("learning_rate", "lr_initial"),
    ("lr", "lr_initial"),
    ("decay", "lr_decay"),
    ("batch", "batch_size"),
    ("batchsize", "batch_size"),
    ("trials", "trials_per_codeword"),
    ("levels_per_block", "bits_per_level"),
    ("b", "bits_per_level"),
    ("l", "num_levels"),
    ("n", "blocklength"),
    ("patience", "early_stop_patience"),
    ("snr", "snr_db"),
];

/// Every `section.name` key.
pub fn known_keys() -> Vec<String> {
    let mut out = Vec::new();
    for (section, v) in table_of(&Config::default()) {
        if let Value::Table(t) = v {
            out.extend(t.keys().map(|k| format!("{section}.{k}")));
        }
    }
    out
}

fn suggestion(key: &str) -> Option<String> {
    let (section, name) = match key.split_once('.') {
        Some((s, n)) => (Some(s), n),
        None => (None, key),
    };
    let keys = known_keys();
    let names: Vec<&str> = keys
        .iter()
        .filter(|k| section.is_none_or(|s| k.starts_with(&format!("{s}."))))
        .map(|k| k.split_once('.').expect("dotted").1)
        .collect();
    let lower = name.to_ascii_lowercase();
    let hinted = HINTS
        .iter()
        .find(|(from, _)| *from == lower)
        .map(|(_, to)| to.to_string())
        .filter(|to| names.contains(&to.as_str()));
    let best = hinted.or_else(|| {
        names
            .iter()
            .map(|n| (strsim::jaro_winkler(&lower, n), *n))
            .filter(|(score, _)| *score > 0.8)
            .max_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, n)| n.to_string())
    })?;
    Some(match section {
        Some(s) => format!("{s}.{best}"),
        None => best,
    })
}

fn unknown_key(key: &str) -> CliError {
    let mut msg = format!("unknown configuration key \"{key}\"");
    if let Some(s) = suggestion(key) {
        msg.push_str(&format!("; did you mean \"{s}\"?"));
    }
    CliError::Config(msg)
}

fn check_keys(defaults: &Table, given: &Table, prefix: &str) -> Result<(), CliError> {
    for (k, v) in given {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match (defaults.get(k), v) {
            (None, _) => return Err(unknown_key(&path)),
            (Some(Value::Table(d)), Value::Table(g)) => check_keys(d, g, &path)?,
            (Some(Value::Table(_)), _) => {
                return Err(CliError::Config(format!("\"{path}\" is a section, not a value")))
            }
            _ => {}
        }
    }
    Ok(())
}

/// Resolves `key` to `(section, name)`.
fn resolve_key(defaults: &Table, key: &str) -> Result<(String, String), CliError> {
    if let Some((section, name)) = key.split_once('.') {
        let ok = defaults
            .get(section)
            .and_then(Value::as_table)
            .is_some_and(|t| t.contains_key(name));
        return if ok {
            Ok((section.to_string(), name.to_string()))
        } else {
            Err(unknown_key(key))
        };
    }
    let owners: Vec<&String> = defaults
        .iter()
        .filter(|(_, v)| v.as_table().is_some_and(|t| t.contains_key(key)))
        .map(|(s, _)| s)
        .collect();
    match owners.as_slice() {
        [one] => Ok((one.to_string(), key.to_string())),
        [] => Err(unknown_key(key)),
        many => Err(CliError::Config(format!(
            "key \"{key}\" is ambiguous; use one of {}",
            many.iter().map(|s| format!("\"{s}.{key}\"")).collect::<Vec<_>>().join(", ")
        ))),
    }
}

/// Parses `raw` as a value of the same kind as `default`.
fn coerce(default: &Value, raw: &str, key: &str) -> Result<Value, CliError> {
    let bad = || CliError::Config(format!("invalid value {raw:?} for \"{key}\""));
    let parse = |s: &str| -> Option<Value> {
        let t: Table = format!("v = {s}").parse().ok()?;
        t.get("v").cloned()
    };
    Ok(match default {
        Value::String(_) => Value::String(raw.to_string()),
        Value::Float(_) => match parse(raw).ok_or_else(bad)? {
            Value::Integer(i) => Value::Float(i as f64),
            v @ Value::Float(_) => v,
            _ => return Err(bad()),
        },
        Value::Integer(_) => match parse(raw).ok_or_else(bad)? {
            v @ Value::Integer(_) => v,
            _ => return Err(bad()),
        },
        Value::Boolean(_) => match parse(raw).ok_or_else(bad)? {
            v @ Value::Boolean(_) => v,
            _ => return Err(bad()),
        },
        Value::Array(items) => {
            let trimmed = raw.trim();
            if trimmed.is_empty() {
                return Ok(Value::Array(Vec::new()));
            }
            let body = trimmed.strip_prefix('[').and_then(|s| s.strip_suffix(']')).unwrap_or(trimmed);
            let elem_default = items.first().cloned().unwrap_or(Value::Float(0.0));
            let vals = body
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| coerce(&elem_default, s.trim(), key))
                .collect::<Result<Vec<_>, _>>()?;
            Value::Array(vals)
        }
        _ => parse(raw).ok_or_else(bad)?,
    })
}

/// Builds the configuration from its layers.
pub fn resolve(preset: Option<Preset>, file: Option<&Path>, overrides: &[String]) -> Result<Config, CliError> {
    let defaults = table_of(&Config::default());
    let mut table = table_of(&Config::preset(preset.unwrap_or(Preset::Full)));
    if let Some(path) = file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let given: Table = text
            .parse()
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        check_keys(&defaults, &given, "")?;
        merge(&mut table, given);
    }
    for o in overrides {
        let (key, raw) = o
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override {o:?} is not key=value")))?;
        let key = key.trim_start_matches("--");
        let (section, name) = resolve_key(&defaults, key)?;
        let default = &defaults[&section][&name];
        let value = coerce(default, raw, key)?;
        table
            .get_mut(&section)
            .and_then(Value::as_table_mut)
            .expect("known section")
            .insert(name, value);
    }
    finish(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn err(r: Result<Config, CliError>) -> String {
        match r {
            Err(CliError::Config(m)) => m,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn defaults_are_the_reference_setup() {
        let c = resolve(None, None, &[]).unwrap();
        assert_eq!((c.code.bits_per_level, c.code.blocklength), (16, 64));
        assert_eq!(c.train.batch_size, 1024);
        assert_eq!(c.train.epochs, 100);
        assert_eq!(c.train.lr_initial, 0.001);
    }

    #[test]
    fn overrides_win_over_preset() {
        let c = resolve(Some(Preset::Micro), None, &["epochs=1".into(), "train.lr_initial=0.01".into()]).unwrap();
        assert_eq!(c.train.epochs, 1);
        assert_eq!(c.train.lr_initial, 0.01);
        assert_eq!(c.code.bits_per_level, 4);
        let c = resolve(None, None, &["train_snr_db=3".into(), "level_loss_weights=1,0,0,0".into()]).unwrap();
        assert_eq!(c.train.train_snr_db, 3.0);
        assert_eq!(c.train.level_loss_weights, vec![1.0, 0.0, 0.0, 0.0]);
        let c = resolve(None, None, &["sweep.snr_list=".into(), "eval.snr_db=inf".into()]).unwrap();
        assert!(c.sweep.snr_list.is_empty());
        assert_eq!(c.eval.snr_db, f64::INFINITY);
    }

    #[test]
    fn unknown_key_is_named_with_a_suggestion() {
        let m = err(resolve(None, None, &["learningrate=0.1".into()]));
        assert!(m.contains("\"learningrate\""), "{m}");
        assert!(m.contains("lr_initial"), "{m}");
        let m = err(resolve(None, None, &["train.epoch=3".into()]));
        assert!(m.contains("\"train.epochs\""), "{m}");
        let m = err(resolve(None, None, &["zzz=1".into()]));
        assert!(!m.contains("did you mean"), "{m}");
    }

    #[test]
    fn ambiguous_and_malformed_overrides() {
        assert!(err(resolve(None, None, &["seed=1".into()])).contains("ambiguous"));
        assert!(err(resolve(None, None, &["epochs=many".into()])).contains("invalid value"));
        assert!(err(resolve(None, None, &["epochs".into()])).contains("key=value"));
        assert!(err(resolve(None, None, &["batch_size=0".into()])).contains("batch_size"));
    }

    #[test]
    fn file_layer_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "[train]\nepochs = 7\n[code]\nnum_levels = 2\n").unwrap();
        let c = resolve(None, Some(&path), &["epochs=9".into()]).unwrap();
        assert_eq!((c.train.epochs, c.code.num_levels), (9, 2));
        assert_eq!(Config::from_toml(&c.to_toml()).unwrap(), c);
        std::fs::write(&path, "[train]\nlearningrate = 0.1\n").unwrap();
        let m = err(resolve(None, Some(&path), &[]));
        assert!(m.contains("train.learningrate") && m.contains("train.lr_initial"), "{m}");
    }
}
