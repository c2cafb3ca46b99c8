use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Name of the generator behind every [`RngStream`].
pub const RNG_ALGORITHM: &str = "chacha8";

/// Name of the Gaussian sampler (`rand_distr::StandardNormal`).
pub const GAUSSIAN_METHOD: &str = "ziggurat";

/// An independent, reproducible random stream: ChaCha8 keyed by the master
/// seed, with the stream index selecting ChaCha's 64-bit stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub index: u64,
}

impl RngStream {
    pub fn new(seed: u64, index: u64) -> Self {
        Self { seed, index }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.index);
        rng
    }
}

/// Packs a purpose tag and a counter into one stream index, so streams used
/// for different purposes never collide.
pub fn stream_index(purpose: u8, counter: u64) -> u64 {
    debug_assert!(counter < 1 << 56);
    ((purpose as u64) << 56) | (counter & ((1 << 56) - 1))
}
