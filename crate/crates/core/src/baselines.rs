//! Analytic and brute-force references: uncoded BPSK, full codebooks and a
//! minimum-distance (maximum-likelihood) decoder.

use std::io::Write;

use rand::Rng;

use crate::channel::{add_awgn, ChannelConfig, ComplexSignal, RngStream};
use crate::mlae::{bits_tensor, MlaeModel};
use crate::nn::Tensor;
use crate::{Error, Result};

/// Largest message width the exhaustive codebook and oracle accept.
pub const MAX_ORACLE_BITS: usize = 12;

/// `Q(√(2·SNR)) = erfc(√SNR) / 2`; `+∞` → 0 and `−∞` → 1/2.
pub fn bpsk_uncoded_ber_analytic(snr_db: f64) -> f64 {
    if snr_db == f64::INFINITY {
        return 0.0;
    }
    if snr_db == f64::NEG_INFINITY {
        return 0.5;
    }
    0.5 * libm::erfc(10f64.powf(snr_db / 10.0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BerCount {
    pub bit_errors: u64,
    pub bits: u64,
}

impl BerCount {
    pub fn ber(&self) -> f64 {
        self.bit_errors as f64 / self.bits as f64
    }
}

/// Monte-Carlo BER of uncoded BPSK (unit power) through [`add_awgn`] with
/// sign detection.
pub fn bpsk_uncoded_ber_mc<R: Rng + ?Sized>(snr_db: f64, trials: u64, rng: &mut R) -> Result<BerCount> {
    if trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    let channel = ChannelConfig::new(1.0, snr_db)?;
    const CHUNK: u64 = 1 << 14;
    let mut errors = 0;
    let mut done = 0;
    let mut buf = Vec::with_capacity(2 * CHUNK as usize);
    let mut bits = Vec::with_capacity(CHUNK as usize);
    while done < trials {
        let len = CHUNK.min(trials - done) as usize;
        bits.clear();
        bits.extend((0..len).map(|_| rng.gen::<bool>()));
        buf.clear();
        buf.extend(bits.iter().flat_map(|&b| [if b { -1.0f32 } else { 1.0 }, 0.0]));
        add_awgn(&mut buf, &channel, rng);
        errors += bits
            .iter()
            .zip(buf.chunks(2))
            .filter(|(&b, s)| (s[0] < 0.0) != b)
            .count() as u64;
        done += len as u64;
    }
    Ok(BerCount {
        bit_errors: errors,
        bits: trials,
    })
}

/// Every transmit signal of a code with `K ≤ 12` information bits.
#[derive(Debug, Clone)]
pub struct Codebook {
    bits: usize,
    signals: Vec<ComplexSignal>,
}

impl Codebook {
    /// `signals[m]` is the codeword of message index `m`.
    pub fn new(bits: usize, signals: Vec<ComplexSignal>) -> Result<Self> {
        if bits == 0 || bits > MAX_ORACLE_BITS {
            return Err(Error::Config(format!(
                "codebook of {bits} bits outside 1..={MAX_ORACLE_BITS}"
            )));
        }
        if signals.len() != 1 << bits {
            return Err(Error::Config(format!(
                "{} codewords for {bits} bits",
                signals.len()
            )));
        }
        let n = signals[0].n();
        if signals.iter().any(|s| s.n() != n) {
            return Err(Error::Config("codewords differ in length".into()));
        }
        Ok(Self { bits, signals })
    }

    /// The joint codebook of the model's active levels. Message index `m`
    /// holds level bits concatenated in ascending level order, MSB first.
    pub fn from_model(model: &MlaeModel) -> Result<Self> {
        let width = model.code().bits_per_level;
        let levels = model.active_levels().len();
        let bits = width * levels;
        if bits > MAX_ORACLE_BITS {
            return Err(Error::Config(format!(
                "codebook of {bits} bits exceeds the {MAX_ORACLE_BITS}-bit limit"
            )));
        }
        let all: Vec<u64> = (0..1u64 << bits).collect();
        let per_level: Vec<Tensor<f32>> = (0..levels)
            .map(|p| {
                let shift = width * (levels - 1 - p);
                let mask = (1u64 << width) - 1;
                let idx: Vec<u64> = all.iter().map(|m| (m >> shift) & mask).collect();
                bits_tensor(&idx, width)
            })
            .collect();
        let x = model.encode_batch(&per_level)?;
        let row = 2 * model.code().blocklength;
        let signals = x
            .data()
            .chunks(row)
            .map(|c| ComplexSignal::from_interleaved(c.to_vec()))
            .collect();
        Self::new(bits, signals)
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn len(&self) -> usize {
        self.signals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signals.is_empty()
    }

    pub fn blocklength(&self) -> usize {
        self.signals[0].n()
    }

    pub fn codeword(&self, index: u64) -> &ComplexSignal {
        &self.signals[index as usize]
    }

    pub fn average_power(&self) -> f64 {
        self.signals.iter().map(ComplexSignal::power).sum::<f64>() / self.signals.len() as f64
    }

    /// Squared distance of `y` to every codeword.
    fn nearest(&self, y: &[f32]) -> u64 {
        let mut best = (f64::INFINITY, 0u64);
        for (i, c) in self.signals.iter().enumerate() {
            let d: f64 = c
                .as_interleaved()
                .iter()
                .zip(y)
                .map(|(&a, &b)| {
                    let e = (a - b) as f64;
                    e * e
                })
                .sum();
            if d < best.0 {
                best = (d, i as u64);
            }
        }
        best.1
    }

    /// CSV of every symbol: `message, bits, symbol, re, im`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        let err = |e: csv::Error| Error::Csv(e.to_string());
        w.write_record(["message", "bits", "symbol", "re", "im"]).map_err(err)?;
        for (m, c) in self.signals.iter().enumerate() {
            let bits = format!("{:0width$b}", m, width = self.bits);
            for i in 0..c.n() {
                let (re, im) = c.symbol(i);
                w.write_record([m.to_string(), bits.clone(), i.to_string(), format!("{re}"), format!("{im}")])
                    .map_err(err)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Minimum-distance decision: the index of the codeword nearest to `y`,
/// lowest index on ties.
pub fn ml_decode_oracle(codebook: &Codebook, y: &ComplexSignal) -> Result<u64> {
    if y.n() != codebook.blocklength() {
        return Err(Error::Config(format!(
            "received {} symbols, codewords have {}",
            y.n(),
            codebook.blocklength()
        )));
    }
    Ok(codebook.nearest(y.as_interleaved()))
}

/// Frame and bit errors of successive decoding and of the ML oracle on the
/// same messages and noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairedErrors {
    pub frames: u64,
    pub successive_frame_errors: u64,
    pub ml_frame_errors: u64,
    pub successive_bit_errors: u64,
    pub ml_bit_errors: u64,
}

/// Sends `frames` uniformly random joint messages through the model at
/// `snr_db` and decodes each received signal both ways.
pub fn paired_comparison(model: &MlaeModel, snr_db: f64, frames: u64, seed: u64) -> Result<PairedErrors> {
    let codebook = Codebook::from_model(model)?;
    let channel = ChannelConfig::new(model.power(), snr_db)?;
    let width = model.code().bits_per_level;
    let levels = model.active_levels().len();
    let k = codebook.bits();
    let row = 2 * model.code().blocklength;
    let mut rng = RngStream::new(seed, 0).rng();
    let mut out = PairedErrors {
        frames,
        successive_frame_errors: 0,
        ml_frame_errors: 0,
        successive_bit_errors: 0,
        ml_bit_errors: 0,
    };
    const BATCH: u64 = 1024;
    let mut done = 0;
    while done < frames {
        let len = BATCH.min(frames - done) as usize;
        let messages: Vec<u64> = (0..len).map(|_| rng.gen_range(0..1u64 << k)).collect();
        let mut y = Vec::with_capacity(len * row);
        for &m in &messages {
            y.extend_from_slice(codebook.codeword(m).as_interleaved());
        }
        add_awgn(&mut y, &channel, &mut rng);
        let decoded = model.decode_batch(&Tensor::new(vec![len, row / 2, 2], y.clone())?)?;
        for (i, &m) in messages.iter().enumerate() {
            let mut sd = 0u64;
            for p in 0..levels {
                for b in 0..width {
                    sd = (sd << 1) | decoded.hard[p][i * width + b] as u64;
                }
            }
            let ml = codebook.nearest(&y[i * row..(i + 1) * row]);
            let sd_bits = (sd ^ m).count_ones() as u64;
            let ml_bits = (ml ^ m).count_ones() as u64;
            out.successive_bit_errors += sd_bits;
            out.ml_bit_errors += ml_bits;
            out.successive_frame_errors += u64::from(sd_bits > 0);
            out.ml_frame_errors += u64::from(ml_bits > 0);
        }
        done += len as u64;
    }
    Ok(out)
}
