use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::nn::Activation;
use crate::{Error, Result};

/// Message split and blocklength: `L` levels of `B` bits over `n` complex
/// channel uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeConfig {
    pub bits_per_level: usize,
    pub num_levels: usize,
    pub blocklength: usize,
}

impl CodeConfig {
    pub fn new(bits_per_level: usize, num_levels: usize, blocklength: usize) -> Result<Self> {
        let cfg = Self {
            bits_per_level,
            num_levels,
            blocklength,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The encoder reshapes its `(B, 4n/B)` feature map into `(n, 4)` and the
    /// decoder pools `n` positions down to `B` with stride `n/B`, so `n` must
    /// be a multiple of both 4 and `B`.
    /// `B = 4`, `n = 16`: small enough to train in seconds.
    pub fn micro(num_levels: usize) -> Self {
        Self {
            bits_per_level: 4,
            num_levels,
            blocklength: 16,
        }
    }

    /// `B = 16`, `n = 64`.
    pub fn full(num_levels: usize) -> Self {
        Self {
            bits_per_level: 16,
            num_levels,
            blocklength: 64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let Self {
            bits_per_level: b,
            num_levels: l,
            blocklength: n,
        } = *self;
        if b == 0 || l == 0 || n == 0 {
            return Err(Error::Config("B, L and n must be positive".into()));
        }
        if b > 24 {
            return Err(Error::Config(format!("B = {b} exceeds the 24-bit limit")));
        }
        if n % 4 != 0 {
            return Err(Error::Config(format!("blocklength {n} is not divisible by 4")));
        }
        if n % b != 0 {
            return Err(Error::Config(format!("blocklength {n} is not a multiple of B = {b}")));
        }
        Ok(())
    }

    /// Total information bits `K = B·L`.
    pub fn total_bits(&self) -> usize {
        self.bits_per_level * self.num_levels
    }

    /// `R = B·L/n` bits per complex channel use.
    pub fn rate(&self) -> f64 {
        self.rate_for(self.num_levels)
    }

    pub fn rate_for(&self, active: usize) -> f64 {
        (self.bits_per_level * active) as f64 / self.blocklength as f64
    }

    pub fn messages_per_level(&self) -> u64 {
        1u64 << self.bits_per_level
    }
}

/// Widths and activations of the per-level layer stacks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    /// Filters of the two kernel-2 encoder convolutions on the bit axis.
    pub encoder_bit_filters: usize,
    /// Filters of the kernel-2 encoder convolution on the symbol axis.
    pub encoder_symbol_filters: usize,
    /// Filters of the first two decoder convolutions.
    pub decoder_front_filters: usize,
    /// Filters of the last two hidden decoder convolutions.
    pub decoder_back_filters: usize,
    pub encoder_activation: Activation,
    pub decoder_activation: Activation,
    pub bn_momentum: f64,
    pub bn_epsilon: f64,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            encoder_bit_filters: 200,
            encoder_symbol_filters: 150,
            decoder_front_filters: 150,
            decoder_back_filters: 200,
            encoder_activation: Activation::Relu,
            decoder_activation: Activation::Relu,
            bn_momentum: 0.1,
            bn_epsilon: 1e-5,
        }
    }
}

/// Ordered, non-empty set of levels. Stored 0-based; displayed 1-based as
/// `1+2+3`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LevelSet(Vec<usize>);

impl LevelSet {
    /// From 0-based indices; sorts and deduplicates.
    pub fn new(mut levels: Vec<usize>) -> Result<Self> {
        levels.sort_unstable();
        levels.dedup();
        if levels.is_empty() {
            return Err(Error::Config("active level set is empty".into()));
        }
        Ok(Self(levels))
    }

    /// Levels `0..count`.
    pub fn first(count: usize) -> Result<Self> {
        Self::new((0..count).collect())
    }

    /// From 1-based level numbers.
    pub fn from_one_based(levels: &[usize]) -> Result<Self> {
        if levels.contains(&0) {
            return Err(Error::Config("level numbers start at 1".into()));
        }
        Self::new(levels.iter().map(|l| l - 1).collect())
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, level: usize) -> bool {
        self.0.binary_search(&level).is_ok()
    }

    pub fn position(&self, level: usize) -> Option<usize> {
        self.0.binary_search(&level).ok()
    }

    pub fn highest(&self) -> usize {
        *self.0.last().expect("non-empty")
    }

    /// Bitmask of the members (level `i` sets bit `i`).
    pub fn mask(&self) -> u64 {
        self.0.iter().fold(0, |m, &l| m | (1 << l))
    }
}

impl fmt::Display for LevelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|l| (l + 1).to_string()).collect();
        f.write_str(&parts.join("+"))
    }
}

impl FromStr for LevelSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let levels = s
            .split(['+', ','])
            .map(|p| {
                p.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Config(format!("bad level list {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_one_based(&levels)
    }
}

/// One level's `B`-bit sub-message, most significant bit first.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitBlock {
    bits: Vec<u8>,
}

impl BitBlock {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::Config("bits must be 0 or 1".into()));
        }
        Ok(Self { bits })
    }

    pub fn from_index(index: u64, width: usize) -> Self {
        Self {
            bits: (0..width)
                .map(|i| ((index >> (width - 1 - i)) & 1) as u8)
                .collect(),
        }
    }

    pub fn index(&self) -> u64 {
        self.bits.iter().fold(0, |acc, &b| (acc << 1) | b as u64)
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}
