use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{stream_index, ComplexSignal, RngStream};
use crate::nn::{Network, Tensor};
use crate::{Error, Result};

use super::arch::{decoder_specs, encoder_specs};
use super::{ArchConfig, BitBlock, CodeConfig, LevelSet};

/// Messages drawn by [`MlaeModel::set_active_levels`] when it calibrates a
/// new subset.
pub const DEFAULT_CALIBRATION_SAMPLES: usize = 1 << 14;

/// Smallest sample count accepted by [`MlaeModel::calibrate_scale`].
pub const MIN_CALIBRATION_SAMPLES: usize = 1 << 12;

const CALIBRATION_BATCH: usize = 1024;
pub(crate) const STREAM_CALIBRATION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    /// Weight initialization.
    pub init: u64,
    /// Lazy calibration of new level subsets.
    pub calibration: u64,
    /// Last training run, if any.
    pub train: Option<u64>,
}

/// Batched output of successive decoding.
#[derive(Debug, Clone)]
pub struct BatchDecode {
    /// Per active level, `[batch, B, 1]` sigmoid outputs.
    pub soft: Vec<Tensor<f32>>,
    /// Per active level, `[batch, B]` decisions (1 iff soft > 0.5).
    pub hard: Vec<Vec<u8>>,
    /// Residual entering each stage, plus the one left after the last
    /// subtraction; `[batch, n, 2]` each.
    pub residuals: Vec<Tensor<f32>>,
}

/// Successive decoding of a single received signal.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    pub soft: Vec<Vec<f32>>,
    pub hard: Vec<BitBlock>,
    /// Average power of each residual in [`BatchDecode::residuals`] order.
    pub residual_power: Vec<f64>,
}

/// `L` encoder/decoder pairs whose encoder outputs superpose onto one
/// transmit signal, decoded level by level with re-encode and subtract.
#[derive(Debug, Clone)]
pub struct MlaeModel {
    code: CodeConfig,
    arch: ArchConfig,
    encoders: Vec<Network<f32>>,
    decoders: Vec<Network<f32>>,
    active: LevelSet,
    scales: BTreeMap<LevelSet, f32>,
    power: f64,
    train_snr_db: Option<f64>,
    seeds: Seeds,
    train_steps: u64,
}

/// `[batch, B, 1]` tensor of 0/1 bits from message indices, MSB first.
pub fn bits_tensor(indices: &[u64], width: usize) -> Tensor<f32> {
    let mut data = Vec::with_capacity(indices.len() * width);
    for &m in indices {
        for i in 0..width {
            data.push(((m >> (width - 1 - i)) & 1) as f32);
        }
    }
    Tensor::new(vec![indices.len(), width, 1], data).expect("non-empty bit batch")
}

/// Hard decisions with ties going to 0.
pub fn threshold(soft: &[f32]) -> Vec<u8> {
    soft.iter().map(|&p| u8::from(p > 0.5)).collect()
}

impl MlaeModel {
    pub fn new(code: CodeConfig, arch: ArchConfig, init_seed: u64) -> Result<Self> {
        code.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(init_seed);
        let enc_specs = encoder_specs(&code, &arch);
        let dec_specs = decoder_specs(&code, &arch);
        let mut encoders = Vec::with_capacity(code.num_levels);
        let mut decoders = Vec::with_capacity(code.num_levels);
        for _ in 0..code.num_levels {
            encoders.push(Network::from_specs(&enc_specs, &mut rng)?);
            decoders.push(Network::from_specs(&dec_specs, &mut rng)?);
        }
        Ok(Self {
            code,
            arch,
            encoders,
            decoders,
            active: LevelSet::first(code.num_levels)?,
            scales: BTreeMap::new(),
            power: 1.0,
            train_snr_db: None,
            seeds: Seeds {
                init: init_seed,
                calibration: init_seed ^ 0x9e37_79b9_7f4a_7c15,
                train: None,
            },
            train_steps: 0,
        })
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        code: CodeConfig,
        arch: ArchConfig,
        encoders: Vec<Network<f32>>,
        decoders: Vec<Network<f32>>,
        active: LevelSet,
        scales: BTreeMap<LevelSet, f32>,
        power: f64,
        train_snr_db: Option<f64>,
        seeds: Seeds,
        train_steps: u64,
    ) -> Self {
        Self {
            code,
            arch,
            encoders,
            decoders,
            active,
            scales,
            power,
            train_snr_db,
            seeds,
            train_steps,
        }
    }

    pub fn code(&self) -> &CodeConfig {
        &self.code
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.arch
    }

    pub fn power(&self) -> f64 {
        self.power
    }

    pub fn seeds(&self) -> &Seeds {
        &self.seeds
    }

    pub fn train_snr_db(&self) -> Option<f64> {
        self.train_snr_db
    }

    /// Optimizer steps applied to this model over its lifetime.
    pub fn train_steps(&self) -> u64 {
        self.train_steps
    }

    pub fn active_levels(&self) -> &LevelSet {
        &self.active
    }

    /// `B·|active|/n`.
    pub fn rate(&self) -> f64 {
        self.code.rate_for(self.active.len())
    }

    /// Frozen scale of the current active subset, if calibrated.
    pub fn scale(&self) -> Option<f32> {
        self.scales.get(&self.active).copied()
    }

    pub fn scales(&self) -> &BTreeMap<LevelSet, f32> {
        &self.scales
    }

    pub fn encoder(&self, level: usize) -> &Network<f32> {
        &self.encoders[level]
    }

    pub fn decoder(&self, level: usize) -> &Network<f32> {
        &self.decoders[level]
    }

    /// Mutable access invalidates every calibrated scale.
    pub fn encoder_mut(&mut self, level: usize) -> &mut Network<f32> {
        self.scales.clear();
        &mut self.encoders[level]
    }

    pub fn decoder_mut(&mut self, level: usize) -> &mut Network<f32> {
        &mut self.decoders[level]
    }

    pub(crate) fn networks_mut(&mut self) -> (&mut [Network<f32>], &mut [Network<f32>]) {
        self.scales.clear();
        (&mut self.encoders, &mut self.decoders)
    }

    pub(crate) fn record_training(&mut self, snr_db: f64, seed: u64, steps: u64) {
        self.train_snr_db = Some(snr_db);
        self.seeds.train = Some(seed);
        self.train_steps += steps;
    }

    pub(crate) fn set_active_unchecked(&mut self, subset: LevelSet) {
        self.active = subset;
    }

    fn check_subset(&self, subset: &LevelSet) -> Result<()> {
        if subset.highest() >= self.code.num_levels {
            return Err(Error::Config(format!(
                "level {} does not exist in a {}-level model",
                subset.highest() + 1,
                self.code.num_levels
            )));
        }
        Ok(())
    }

    /// Switches the active subset without touching any encoder or decoder
    /// parameter. A subset seen for the first time is calibrated with
    /// [`DEFAULT_CALIBRATION_SAMPLES`] messages from a stream derived from
    /// the model's calibration seed and the subset.
    pub fn set_active_levels(&mut self, subset: LevelSet) -> Result<()> {
        self.check_subset(&subset)?;
        self.active = subset;
        if !self.scales.contains_key(&self.active) {
            let stream = RngStream::new(
                self.seeds.calibration,
                stream_index(STREAM_CALIBRATION, self.active.mask()),
            );
            self.calibrate_scale(DEFAULT_CALIBRATION_SAMPLES, &mut stream.rng())?;
        }
        Ok(())
    }

    /// Unscaled output of one level's encoder, `[batch, n, 2]`.
    pub fn encode_level_raw(&self, level: usize, bits: &Tensor<f32>) -> Result<Tensor<f32>> {
        Ok(self.encoders[level].infer(bits)?)
    }

    /// Unscaled superposition `Σ_{i ∈ active} enc_i(bits_i)`.
    pub fn superpose_raw(&self, bits: &[Tensor<f32>]) -> Result<Tensor<f32>> {
        if bits.len() != self.active.len() {
            return Err(Error::MessageCount {
                expected: self.active.len(),
                got: bits.len(),
            });
        }
        let mut sum: Option<Tensor<f32>> = None;
        for (&level, b) in self.active.indices().iter().zip(bits) {
            let u = self.encode_level_raw(level, b)?;
            match sum.as_mut() {
                None => sum = Some(u),
                Some(s) => s.add_assign(&u)?,
            }
        }
        Ok(sum.expect("non-empty active set"))
    }

    /// Sets the frozen scale of the active subset to
    /// `sqrt(P / mean power of the unscaled sum)` over `sample_count` uniformly
    /// random messages.
    pub fn calibrate_scale<R: Rng + ?Sized>(&mut self, sample_count: usize, rng: &mut R) -> Result<f32> {
        if sample_count < MIN_CALIBRATION_SAMPLES {
            return Err(Error::Config(format!(
                "calibration needs at least {MIN_CALIBRATION_SAMPLES} samples, got {sample_count}"
            )));
        }
        let width = self.code.bits_per_level;
        let messages = self.code.messages_per_level();
        let mut energy = 0.0f64;
        let mut remaining = sample_count;
        while remaining > 0 {
            let batch = remaining.min(CALIBRATION_BATCH);
            let bits: Vec<Tensor<f32>> = (0..self.active.len())
                .map(|_| {
                    let idx: Vec<u64> = (0..batch).map(|_| rng.gen_range(0..messages)).collect();
                    bits_tensor(&idx, width)
                })
                .collect();
            let sum = self.superpose_raw(&bits)?;
            energy += sum.data().iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>();
            remaining -= batch;
        }
        let mean = energy / (sample_count * self.code.blocklength) as f64;
        if !(mean > 0.0) || !mean.is_finite() {
            return Err(Error::DegenerateEncoder);
        }
        let scale = (self.power / mean).sqrt() as f32;
        self.scales.insert(self.active.clone(), scale);
        Ok(scale)
    }

    fn require_scale(&self) -> Result<f32> {
        self.scale()
            .ok_or_else(|| Error::Uncalibrated(self.active.to_string()))
    }

    /// `x = scale · Σ_{i ∈ active} enc_i(bits_i)` for a batch;
    /// one `[batch, B, 1]` tensor per active level.
    pub fn encode_batch(&self, bits: &[Tensor<f32>]) -> Result<Tensor<f32>> {
        let scale = self.require_scale()?;
        Ok(self.superpose_raw(bits)?.scale(scale))
    }

    /// Encodes one message per active level into a length-`n` signal.
    pub fn encode(&self, messages: &[BitBlock]) -> Result<ComplexSignal> {
        if messages.len() != self.active.len() {
            return Err(Error::MessageCount {
                expected: self.active.len(),
                got: messages.len(),
            });
        }
        let width = self.code.bits_per_level;
        let bits = messages
            .iter()
            .map(|m| {
                if m.len() != width {
                    return Err(Error::Config(format!("message has {} bits, expected {width}", m.len())));
                }
                Ok(bits_tensor(&[m.index()], width))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ComplexSignal::from_interleaved(self.encode_batch(&bits)?.into_data()))
    }

    /// `residual - scale · enc_level(bits)`.
    pub fn subtract_level(&self, residual: &Tensor<f32>, level: usize, bits: &Tensor<f32>) -> Result<Tensor<f32>> {
        let scale = self.require_scale()?;
        let estimate = self.encode_level_raw(level, bits)?.scale(scale);
        Ok(residual.sub(&estimate)?)
    }

    /// Multi-stage decoding in ascending level order: decode the residual,
    /// threshold, re-encode the decision, subtract it, move on.
    pub fn decode_batch(&self, y: &Tensor<f32>) -> Result<BatchDecode> {
        self.require_scale()?;
        let (n, width) = (self.code.blocklength, self.code.bits_per_level);
        if y.shape().len() != 3 || y.shape()[1] != n || y.shape()[2] != 2 {
            return Err(Error::Config(format!("received batch must be [batch, {n}, 2], got {:?}", y.shape())));
        }
        let batch = y.batch();
        let mut out = BatchDecode {
            soft: Vec::with_capacity(self.active.len()),
            hard: Vec::with_capacity(self.active.len()),
            residuals: vec![y.clone()],
        };
        for &level in self.active.indices() {
            let residual = out.residuals.last().expect("seeded with y");
            let soft = self.decoders[level].infer(residual)?;
            let hard = threshold(soft.data());
            let hard_bits = Tensor::new(vec![batch, width, 1], hard.iter().map(|&b| b as f32).collect())?;
            let next = self.subtract_level(residual, level, &hard_bits)?;
            if !next.is_finite() {
                return Err(Error::Nn(crate::nn::NnError::NonFinite("residual".into())));
            }
            out.soft.push(soft);
            out.hard.push(hard);
            out.residuals.push(next);
        }
        Ok(out)
    }

    pub fn decode_successive(&self, y: &ComplexSignal) -> Result<DecodeResult> {
        let n = self.code.blocklength;
        if y.n() != n {
            return Err(Error::Config(format!("received signal has {} symbols, expected {n}", y.n())));
        }
        let t = Tensor::new(vec![1, n, 2], y.as_interleaved().to_vec())?;
        let d = self.decode_batch(&t)?;
        Ok(DecodeResult {
            soft: d.soft.iter().map(|s| s.data().to_vec()).collect(),
            hard: d
                .hard
                .into_iter()
                .map(|h| BitBlock::new(h).expect("thresholded bits"))
                .collect(),
            residual_power: d
                .residuals
                .iter()
                .map(|r| crate::channel::interleaved_power(r.data()))
                .collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Layer;

    fn micro(levels: usize) -> MlaeModel {
        let arch = ArchConfig {
            encoder_bit_filters: 8,
            encoder_symbol_filters: 6,
            decoder_front_filters: 6,
            decoder_back_filters: 8,
            ..ArchConfig::default()
        };
        MlaeModel::new(CodeConfig::new(4, levels, 16).unwrap(), arch, 11).unwrap()
    }

    fn last_conv(net: &mut Network<f32>) -> &mut crate::nn::Conv1d<f32> {
        match net.layers_mut().last_mut().unwrap() {
            Layer::Conv1d(c) => c,
            _ => unreachable!(),
        }
    }

    #[test]
    fn encode_requires_calibration() {
        let m = micro(1);
        let err = m.encode(&[BitBlock::from_index(3, 4)]).unwrap_err();
        assert!(matches!(err, Error::Uncalibrated(_)));
    }

    #[test]
    fn wrong_message_count_is_rejected() {
        let mut m = micro(2);
        m.set_active_levels(LevelSet::first(2).unwrap()).unwrap();
        assert!(matches!(
            m.encode(&[BitBlock::from_index(1, 4)]),
            Err(Error::MessageCount { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn constant_power_four_encoder_gets_half_scale() {
        let mut m = micro(1);
        let conv = last_conv(m.encoder_mut(0));
        conv.kernel.value.iter_mut().for_each(|w| *w = 0.0);
        conv.bias.value = vec![2f32.sqrt(), 2f32.sqrt()];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let scale = m.calibrate_scale(1 << 12, &mut rng).unwrap();
        assert!((scale - 0.5).abs() < 1e-6);
    }

    #[test]
    fn zero_encoder_is_degenerate() {
        let mut m = micro(1);
        let conv = last_conv(m.encoder_mut(0));
        conv.kernel.value.iter_mut().for_each(|w| *w = 0.0);
        conv.bias.value = vec![0.0, 0.0];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(m.calibrate_scale(1 << 12, &mut rng), Err(Error::DegenerateEncoder)));
        assert!(m.calibrate_scale(100, &mut rng).is_err());
    }

    #[test]
    fn doubling_output_weights_halves_the_scale() {
        let mut m = micro(2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let before = m.calibrate_scale(1 << 12, &mut rng).unwrap();
        for level in 0..2 {
            let conv = last_conv(m.encoder_mut(level));
            conv.kernel.value.iter_mut().for_each(|w| *w *= 2.0);
            conv.bias.value.iter_mut().for_each(|w| *w *= 2.0);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let after = m.calibrate_scale(1 << 12, &mut rng).unwrap();
        assert!(((after / before) as f64 - 0.5).abs() < 1e-3);
    }

    #[test]
    fn calibration_is_idempotent() {
        let mut m = micro(2);
        let a = m.calibrate_scale(1 << 12, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = m.calibrate_scale(1 << 12, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn single_level_encode_is_scaled_encoder_output() {
        let mut m = micro(1);
        m.set_active_levels(LevelSet::first(1).unwrap()).unwrap();
        let scale = m.scale().unwrap();
        let x = m.encode(&[BitBlock::from_index(9, 4)]).unwrap();
        let raw = m.encode_level_raw(0, &bits_tensor(&[9], 4)).unwrap().scale(scale);
        assert_eq!(x.as_interleaved(), raw.data());
    }

    #[test]
    fn level_set_changes_rate_and_keep_parameters() {
        let mut m = micro(3);
        let before: Vec<Vec<f32>> = m.encoder(0).params().iter().map(|p| p.value.clone()).collect();
        m.set_active_levels(LevelSet::new(vec![0]).unwrap()).unwrap();
        assert_eq!(m.rate(), 0.25);
        let after: Vec<Vec<f32>> = m.encoder(0).params().iter().map(|p| p.value.clone()).collect();
        assert_eq!(before, after);
        assert!(m.set_active_levels(LevelSet::new(vec![3]).unwrap()).is_err());
    }

    #[test]
    fn residual_trace_has_one_entry_per_stage_plus_final() {
        let mut m = micro(2);
        m.set_active_levels(LevelSet::first(2).unwrap()).unwrap();
        let x = m.encode(&[BitBlock::from_index(1, 4), BitBlock::from_index(14, 4)]).unwrap();
        let d = m.decode_successive(&x).unwrap();
        assert_eq!(d.residual_power.len(), 3);
        assert!(d.residual_power.iter().all(|p| p.is_finite()));
        assert_eq!(d.hard.len(), 2);
        for (soft, hard) in d.soft.iter().zip(&d.hard) {
            assert_eq!(threshold(soft), hard.bits());
        }
    }

    #[test]
    fn ties_go_to_zero() {
        assert_eq!(threshold(&[0.5, 0.500001, 0.49]), vec![0, 1, 0]);
    }
}
