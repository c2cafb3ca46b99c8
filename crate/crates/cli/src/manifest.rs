use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::CliError;

pub const FILE_NAME: &str = "manifest.json";

/// What to run, apart from the configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Invocation {
    pub command: String,
    pub out_dir: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub overlays: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: PathBuf,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub init: u64,
    pub train: u64,
    pub eval: u64,
    pub baseline: u64,
    pub rng: String,
    pub gaussian: String,
}

/// Record of one artifact-producing run; enough to repeat it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub invocation: Invocation,
    /// Fully resolved configuration as TOML.
    pub config: String,
    pub seeds: SeedRecord,
    pub artifacts: Vec<Artifact>,
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
    pub wall_clock_s: f64,
    /// Command-specific timings (per-epoch wall clock, evaluation time).
    pub timings: serde_json::Value,
}

pub fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join(FILE_NAME);
        let mut text = serde_json::to_vec_pretty(self).map_err(|e| CliError::Other(e.to_string()))?;
        text.push(b'\n');
        mlae::write_atomic(&path, &text)?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read(path)?;
        serde_json::from_slice(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

pub fn artifact(path: &Path) -> Result<Artifact, CliError> {
    Ok(Artifact {
        path: path.to_path_buf(),
        bytes: std::fs::metadata(path)?.len(),
    })
}
