//! Seeded randomness.
//!
//! Every random choice in the crate is drawn from ChaCha8 seeded by an explicit
//! `u64`. Randomized post-processors use [`row_uniform`], a counter-based draw keyed
//! by `(seed, row key)`, so that any shard or subset of rows reproduces the same
//! per-row decisions.

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Mixes a sub-stream tag into a seed (splitmix64 finalizer).
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform draw in `[0, 1)` at position `key` of the stream for `seed`.
pub fn row_uniform(seed: u64, key: u64) -> f64 {
    let mut rng = seeded(seed);
    rng.set_word_pos(u128::from(key) * 2);
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniformly shuffled `0..n`.
pub fn permutation(n: usize, seed: u64) -> alloc::vec::Vec<usize> {
    let mut idx: alloc::vec::Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seeded(seed));
    idx
}
