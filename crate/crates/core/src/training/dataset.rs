use rand::seq::SliceRandom;
use rand::Rng;

use crate::{Error, Result};

/// Largest `B` for which the full enumeration is materialized.
pub const MAX_DATASET_BITS: usize = 24;

/// Every `B`-bit message, each repeated `repetitions` times. Rows are stored
/// as message indices; [`crate::mlae::bits_tensor`] expands them MSB-first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    bits: usize,
    repetitions: usize,
    rows: Vec<u32>,
}

/// Builds the enumeration in canonical order (message-major).
pub fn generate_dataset(bits: usize, repetitions: usize) -> Result<Dataset> {
    if bits == 0 || bits > MAX_DATASET_BITS {
        return Err(Error::Config(format!(
            "dataset width B = {bits} outside 1..={MAX_DATASET_BITS}"
        )));
    }
    if repetitions == 0 {
        return Err(Error::Config("repetitions must be at least 1".into()));
    }
    let count = 1u32 << bits;
    let rows = (0..count)
        .flat_map(|m| std::iter::repeat_n(m, repetitions))
        .collect();
    Ok(Dataset {
        bits,
        repetitions,
        rows,
    })
}

impl Dataset {
    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn repetitions(&self) -> usize {
        self.repetitions
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[u32] {
        &self.rows
    }

    /// Bits of row `i`, MSB first.
    pub fn row_bits(&self, i: usize) -> Vec<u8> {
        let m = self.rows[i];
        (0..self.bits)
            .map(|b| ((m >> (self.bits - 1 - b)) & 1) as u8)
            .collect()
    }

    /// A shuffled copy of the row order.
    pub fn shuffled<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<u32> {
        let mut rows = self.rows.clone();
        rows.shuffle(rng);
        rows
    }
}
