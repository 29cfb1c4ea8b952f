//! Seed derivation shared by every seeded component.
//!
//! `derive_seed(master, index)` is the SplitMix64 output function applied to
//! `master + (index + 1) * 0x9E3779B97F4A7C15` (all arithmetic wrapping mod 2^64):
//!
//! ```text
//! z = master + (index + 1) * 0x9E3779B97F4A7C15
//! z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//! z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//! return z ^ (z >> 31)
//! ```
//!
//! Generators are then built with `ChaCha8Rng::seed_from_u64(derived)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream tags used to split one master seed into independent purposes.
pub mod stream {
    pub const EVAL: u64 = 0xE7A1;
    pub const SAMPLER: u64 = 0x5A3B;
    pub const PHASE1: u64 = 0x9B01;
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
