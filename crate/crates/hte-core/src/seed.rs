//! Seed plumbing: every random operation in the crate draws from an
//! explicitly passed [`RngSeed`]; there is no ambient global generator.
//! Identical seed + identical inputs means bit-identical outputs.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// A 64-bit seed for any randomized operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RngSeed(pub u64);

impl RngSeed {
    pub fn new(seed: u64) -> Self {
        RngSeed(seed)
    }

    /// Derive an independent child seed for a named stream. Children of the
    /// same parent with different streams are decorrelated; the derivation is
    /// a fixed bijective mix so the mapping is stable across runs.
    pub fn derive(self, stream: u64) -> Self {
        RngSeed(splitmix64(
            self.0 ^ splitmix64(stream.wrapping_add(0x9e37_79b9_7f4a_7c15)),
        ))
    }

    /// Instantiate the deterministic generator for this seed.
    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

impl From<u64> for RngSeed {
    fn from(v: u64) -> Self {
        RngSeed(v)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_seed_same_stream() {
        let a: Vec<u64> = RngSeed(7)
            .rng()
            .sample_iter(rand::distributions::Standard)
            .take(8)
            .collect();
        let b: Vec<u64> = RngSeed(7)
            .rng()
            .sample_iter(rand::distributions::Standard)
            .take(8)
            .collect();
        assert_eq!(a, b);
    }

    #[test]
    fn derived_streams_differ() {
        let s = RngSeed(42);
        assert_ne!(s.derive(0), s.derive(1));
        assert_ne!(s.derive(0).0, s.0);
        // Derivation is deterministic.
        assert_eq!(s.derive(3), s.derive(3));
    }
}
