//! Reproducible random streams.
//!
//! Every draw comes from a ChaCha (counter-based) generator whose key is the
//! user seed and whose 64-bit stream id encodes (replication, purpose). Two
//! streams with different ids never overlap, and a stream's output does not
//! depend on which thread consumes it or in which order.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// What a stream is used for inside one replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Purpose {
    Controls = 1,
    Incident = 2,
    PrevalentCovariates = 3,
    PrevalentResample = 4,
    BackwardTimes = 5,
    Restarts = 6,
    Extra = 7,
}

/// Root of a stream hierarchy: scenario seed → replication → purpose.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamRoot {
    seed: u64,
}

impl StreamRoot {
    pub fn new(seed: u64) -> Self {
        StreamRoot { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent stream for `purpose` within `replication`.
    pub fn stream(&self, replication: u64, purpose: Purpose) -> ChaCha12Rng {
        assert!(replication < (1 << 56), "replication index out of range");
        let mut rng = ChaCha12Rng::from_seed(expand_seed(self.seed));
        rng.set_stream((replication << 8) | purpose as u64);
        rng
    }
}

// SplitMix64 expansion of a 64-bit seed into a 256-bit ChaCha key.
fn expand_seed(seed: u64) -> [u8; 32] {
    let mut state = seed;
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        chunk.copy_from_slice(&z.to_le_bytes());
    }
    key
}
