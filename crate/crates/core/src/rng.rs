//! Seeded random streams.
//!
//! All randomness comes from ChaCha8, a counter-based generator whose output
//! is specified bit-for-bit and therefore identical on every platform. A
//! [`SeedStream`] pairs a master seed with a [`StreamKind`]; each integer
//! index selects an independent ChaCha stream, so work item `k` (a sentence,
//! a grammar replicate, ...) always sees the same numbers no matter how the
//! work is scheduled across threads.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type Rng = ChaCha8Rng;

const INDEX_BITS: u32 = 56;
const INDEX_MASK: u64 = (1 << INDEX_BITS) - 1;

/// Logical purpose of a stream. The discriminant occupies the top byte of the
/// ChaCha stream id, the item index the remaining 56 bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamKind {
    Grammar = 1,
    Data = 2,
    Test = 3,
    Experiment = 4,
    Reference = 5,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeedStream {
    pub seed: u64,
    pub kind: StreamKind,
}

impl SeedStream {
    pub fn new(seed: u64, kind: StreamKind) -> Self {
        SeedStream { seed, kind }
    }

    /// Generator for work item `index`.
    pub fn rng(&self, index: u64) -> Rng {
        debug_assert!(index <= INDEX_MASK);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(((self.kind as u64) << INDEX_BITS) | (index & INDEX_MASK));
        rng
    }

    /// A fresh 64-bit seed for item `index`, used to hand nested experiments
    /// their own master seed.
    pub fn derive(&self, index: u64) -> u64 {
        self.rng(index).next_u64()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn same_index_same_numbers() {
        let s = SeedStream::new(42, StreamKind::Data);
        let a: Vec<u64> = (0..4).map(|_| s.rng(7).random()).collect();
        let b: Vec<u64> = (0..4).map(|_| s.rng(7).random()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn kinds_and_indices_are_independent() {
        let data = SeedStream::new(42, StreamKind::Data);
        let test = SeedStream::new(42, StreamKind::Test);
        assert_ne!(data.rng(0).next_u64(), test.rng(0).next_u64());
        assert_ne!(data.rng(0).next_u64(), data.rng(1).next_u64());
    }

    #[test]
    fn known_first_output_is_stable() {
        // Pinned so that an accidental change of generator or stream layout
        // shows up as a test failure rather than silently different data.
        let first = SeedStream::new(0, StreamKind::Grammar).rng(0).next_u64();
        assert_eq!(first, 11366878960547222557);
        assert_eq!(
            SeedStream::new(12345, StreamKind::Data).rng(7).next_u64(),
            10877090907394766412
        );
    }
}
