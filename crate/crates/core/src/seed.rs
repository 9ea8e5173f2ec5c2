//! Seed derivation for independent, reproducible random streams.
//!
//! A derived seed is `splitmix64(master ^ splitmix64(stream))`, where
//! `splitmix64` is the SplitMix64 output function (Steele, Lea and Flood).
//! Streams are seeded into ChaCha8, whose output is platform independent.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 output function applied to `x + 0x9E3779B97F4A7C15`.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of stream `stream` under `master`.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    splitmix64(master ^ splitmix64(stream))
}

/// Generator for stream `stream` under `master`.
pub fn stream_rng(master: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, stream))
}
