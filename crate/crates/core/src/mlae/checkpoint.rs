//! Binary checkpoint format.
//!
//! ```text
//! "MLAE" | version: u32 LE | header_len: u64 LE | header (UTF-8 JSON)
//!        | parameter blobs (f32 LE, manifest order) | CRC-32 of all preceding bytes (u32 LE)
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{LayerSpec, Network};

use super::{ArchConfig, CodeConfig, LevelSet, MlaeModel, Seeds};

pub const MAGIC: &[u8; 4] = b"MLAE";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not an MLAE checkpoint")]
    BadMagic,
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint checksum mismatch")]
    Checksum,
    #[error("checkpoint is truncated")]
    Truncated,
    #[error("malformed checkpoint header: {0}")]
    Header(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Serialize, Deserialize)]
struct ScaleEntry {
    levels: LevelSet,
    /// IEEE-754 bits, authoritative.
    bits: String,
    value: f32,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    /// Byte offset from the start of the blob section.
    offset: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    code: CodeConfig,
    arch: ArchConfig,
    power: f64,
    train_snr_db: Option<f64>,
    seeds: Seeds,
    train_steps: u64,
    active_levels: LevelSet,
    scales: Vec<ScaleEntry>,
    encoder_layers: Vec<LayerSpec>,
    decoder_layers: Vec<LayerSpec>,
    parameters: Vec<ManifestEntry>,
}

fn networks(model: &MlaeModel) -> Vec<(String, &Network<f32>)> {
    let levels = model.code().num_levels;
    let mut out = Vec::with_capacity(2 * levels);
    for l in 0..levels {
        out.push((format!("encoder.{}", l + 1), model.encoder(l)));
        out.push((format!("decoder.{}", l + 1), model.decoder(l)));
    }
    out
}

/// Serializes `model` into the checkpoint byte layout.
pub fn write_checkpoint(model: &MlaeModel) -> Vec<u8> {
    let mut blobs = Vec::new();
    let mut parameters = Vec::new();
    for (prefix, net) in networks(model) {
        for entry in net.state() {
            parameters.push(ManifestEntry {
                name: format!("{prefix}.{}", entry.name),
                shape: entry.shape,
                offset: blobs.len() as u64,
            });
            for v in entry.data {
                blobs.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let header = Header {
        code: *model.code(),
        arch: model.arch().clone(),
        power: model.power(),
        train_snr_db: model.train_snr_db(),
        seeds: *model.seeds(),
        train_steps: model.train_steps(),
        active_levels: model.active_levels().clone(),
        scales: model
            .scales()
            .iter()
            .map(|(levels, &value)| ScaleEntry {
                levels: levels.clone(),
                bits: format!("{:08x}", value.to_bits()),
                value,
            })
            .collect(),
        encoder_layers: model.encoder(0).specs(),
        decoder_layers: model.decoder(0).specs(),
        parameters,
    };
    let header = serde_json::to_vec_pretty(&header).expect("header serializes");

    let mut out = Vec::with_capacity(16 + header.len() + blobs.len() + 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&blobs);
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

/// Parses checkpoint bytes back into a model.
pub fn read_checkpoint(bytes: &[u8]) -> Result<MlaeModel, CheckpointError> {
    if bytes.len() < 4 {
        return Err(CheckpointError::Truncated);
    }
    if &bytes[..4] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    if bytes.len() < 16 {
        return Err(CheckpointError::Truncated);
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(CheckpointError::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let header_end = 16u64
        .checked_add(header_len)
        .filter(|&e| e + 4 <= bytes.len() as u64)
        .ok_or(CheckpointError::Truncated)? as usize;
    let body_end = bytes.len() - 4;
    let stored_crc = u32::from_le_bytes(bytes[body_end..].try_into().unwrap());
    if crc32fast::hash(&bytes[..body_end]) != stored_crc {
        return Err(CheckpointError::Checksum);
    }
    let header: Header = serde_json::from_slice(&bytes[16..header_end])
        .map_err(|e| CheckpointError::Header(e.to_string()))?;
    header
        .code
        .validate()
        .map_err(|e| CheckpointError::Header(e.to_string()))?;
    let blobs = &bytes[header_end..body_end];

    let mut rng = rand::rngs::mock::StepRng::new(0, 0);
    let build = |specs: &[LayerSpec], rng: &mut rand::rngs::mock::StepRng| {
        Network::<f32>::from_specs(specs, rng).map_err(|e| CheckpointError::Header(e.to_string()))
    };
    let levels = header.code.num_levels;
    let mut encoders = Vec::with_capacity(levels);
    let mut decoders = Vec::with_capacity(levels);
    for _ in 0..levels {
        encoders.push(build(&header.encoder_layers, &mut rng)?);
        decoders.push(build(&header.decoder_layers, &mut rng)?);
    }

    let mut manifest = header.parameters.iter();
    let mut consumed = 0usize;
    for l in 0..levels {
        for (prefix, net) in [("encoder", &mut encoders[l]), ("decoder", &mut decoders[l])] {
            let names: Vec<(String, Vec<usize>)> = net
                .state()
                .into_iter()
                .map(|e| (format!("{prefix}.{}.{}", l + 1, e.name), e.shape))
                .collect();
            for ((name, shape), slot) in names.into_iter().zip(net.state_mut()) {
                let entry = manifest
                    .next()
                    .ok_or_else(|| CheckpointError::Header("parameter manifest is short".into()))?;
                if entry.name != name || entry.shape != shape {
                    return Err(CheckpointError::Header(format!(
                        "manifest entry {} {:?} does not match expected {name} {shape:?}",
                        entry.name, entry.shape
                    )));
                }
                let start = entry.offset as usize;
                let end = start + 4 * slot.len();
                if start != consumed {
                    return Err(CheckpointError::Header(format!("{name} has offset {start}, expected {consumed}")));
                }
                if end > blobs.len() {
                    return Err(CheckpointError::Truncated);
                }
                for (v, chunk) in slot.iter_mut().zip(blobs[start..end].chunks_exact(4)) {
                    *v = f32::from_le_bytes(chunk.try_into().unwrap());
                }
                consumed = end;
            }
        }
    }
    if manifest.next().is_some() || consumed != blobs.len() {
        return Err(CheckpointError::Header("parameter section has unexpected extra data".into()));
    }

    let mut scales = BTreeMap::new();
    for s in header.scales {
        let bits = u32::from_str_radix(&s.bits, 16)
            .map_err(|_| CheckpointError::Header(format!("bad scale bits {:?}", s.bits)))?;
        scales.insert(s.levels, f32::from_bits(bits));
    }
    if header.active_levels.highest() >= levels {
        return Err(CheckpointError::Header("active level out of range".into()));
    }
    Ok(MlaeModel::from_parts(
        header.code,
        header.arch,
        encoders,
        decoders,
        header.active_levels,
        scales,
        header.power,
        header.train_snr_db,
        header.seeds,
        header.train_steps,
    ))
}

/// Writes the checkpoint through a temporary file and a rename.
pub fn save_checkpoint(model: &MlaeModel, path: &Path) -> Result<(), CheckpointError> {
    Ok(crate::write_atomic(path, &write_checkpoint(model))?)
}

pub fn load_checkpoint(path: &Path) -> Result<MlaeModel, CheckpointError> {
    read_checkpoint(&fs::read(path)?)
}
