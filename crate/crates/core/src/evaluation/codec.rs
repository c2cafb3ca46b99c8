use crate::mlae::{LevelSet, MlaeModel};
use crate::nn::Tensor;
use crate::{Error, Result};

/// Anything that maps per-level bit batches to channel symbols and back.
pub trait Codec: Sync {
    fn bits_per_level(&self) -> usize;
    /// Complex symbols per frame.
    fn blocklength(&self) -> usize;
    fn power(&self) -> f64;
    fn active_levels(&self) -> &LevelSet;
    fn rate(&self) -> f64;
    /// One `[batch, B, 1]` tensor per active level → `[batch, n, 2]`.
    fn transmit(&self, bits: &[Tensor<f32>]) -> Result<Tensor<f32>>;
    /// Hard decisions per active level, `batch · B` each.
    fn receive(&self, y: &Tensor<f32>) -> Result<Vec<Vec<u8>>>;
}

impl Codec for MlaeModel {
    fn bits_per_level(&self) -> usize {
        self.code().bits_per_level
    }

    fn blocklength(&self) -> usize {
        self.code().blocklength
    }

    fn power(&self) -> f64 {
        MlaeModel::power(self)
    }

    fn active_levels(&self) -> &LevelSet {
        MlaeModel::active_levels(self)
    }

    fn rate(&self) -> f64 {
        MlaeModel::rate(self)
    }

    fn transmit(&self, bits: &[Tensor<f32>]) -> Result<Tensor<f32>> {
        self.encode_batch(bits)
    }

    fn receive(&self, y: &Tensor<f32>) -> Result<Vec<Vec<u8>>> {
        Ok(self.decode_batch(y)?.hard)
    }
}

/// Uncoded BPSK: bit 0 → `+√P`, bit 1 → `−√P` on the real axis, one bit per
/// complex symbol, decided by the sign of the real part (zero → 0).
#[derive(Debug, Clone)]
pub struct BpskCodec {
    bits: usize,
    power: f64,
    active: LevelSet,
}

impl BpskCodec {
    pub fn new(bits: usize, power: f64) -> Result<Self> {
        if bits == 0 || bits > 24 {
            return Err(Error::Config(format!("BPSK frame of {bits} bits outside 1..=24")));
        }
        if !(power > 0.0 && power.is_finite()) {
            return Err(Error::Config(format!("power {power} must be positive")));
        }
        Ok(Self {
            bits,
            power,
            active: LevelSet::first(1)?,
        })
    }
}

impl Codec for BpskCodec {
    fn bits_per_level(&self) -> usize {
        self.bits
    }

    fn blocklength(&self) -> usize {
        self.bits
    }

    fn power(&self) -> f64 {
        self.power
    }

    fn active_levels(&self) -> &LevelSet {
        &self.active
    }

    fn rate(&self) -> f64 {
        1.0
    }

    fn transmit(&self, bits: &[Tensor<f32>]) -> Result<Tensor<f32>> {
        let [b] = bits else {
            return Err(Error::MessageCount { expected: 1, got: bits.len() });
        };
        let amp = self.power.sqrt() as f32;
        let data = b
            .data()
            .iter()
            .flat_map(|&bit| [if bit > 0.5 { -amp } else { amp }, 0.0])
            .collect();
        Ok(Tensor::new(vec![b.batch(), self.bits, 2], data)?)
    }

    fn receive(&self, y: &Tensor<f32>) -> Result<Vec<Vec<u8>>> {
        Ok(vec![y.data().chunks(2).map(|s| u8::from(s[0] < 0.0)).collect()])
    }
}
