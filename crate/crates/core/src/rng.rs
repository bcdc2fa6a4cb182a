//! Seed derivation. Every randomized step draws from its own ChaCha stream
//! keyed by a 64-bit seed, so runs are reproducible from `(seed, input order)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a textual key (e.g. a grid cell id).
pub fn derive_seed(parent: u64, key: &str) -> u64 {
    // FNV-1a over the key, then mixed with the parent.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in key.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    mix64(parent ^ mix64(h))
}

/// Derives a child seed from a parent seed and a list of integer coordinates.
pub fn derive_seed_n(parent: u64, coords: &[u64]) -> u64 {
    coords.iter().fold(mix64(parent), |acc, &c| mix64(acc ^ c.wrapping_mul(0x2545_f491_4f6c_dd1d)))
}
