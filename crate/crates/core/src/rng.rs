//! Seed streams.
//!
//! Every randomized constructor takes a 64-bit seed and draws from a ChaCha20
//! stream keyed by it. Derived seeds mix a tag through splitmix64 and xor it
//! into the parent, so sketch `l` of a boosting run gets
//! `base ^ splitmix64(l)` regardless of the order sketches are built in.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type Stream = ChaCha20Rng;

pub fn stream(seed: u64) -> Stream {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(base: u64, tag: u64) -> u64 {
    base ^ splitmix64(tag)
}

/// Seed for a tag path, e.g. `[cell, kind, sketch]`.
pub fn derive_path(base: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(base, |s, &t| derive_seed(s, t))
}
