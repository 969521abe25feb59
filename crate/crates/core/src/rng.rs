//! Seeded randomness.
//!
//! Every random draw in the engine comes from ChaCha8 (`rand_chacha`) seeded
//! with [`ChaCha8Rng::seed_from_u64`]. Uniform indices are taken as the high
//! 64 bits of `next_u64() * bound` (128-bit product), and shuffles are
//! Fisher-Yates from the back. Both are spelled out here rather than
//! delegated so fixtures stay reproducible if `rand` changes its helpers.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform integer in `0..bound`. `bound` must be positive.
#[inline]
pub fn index<R: RngCore>(rng: &mut R, bound: usize) -> usize {
    ((rng.next_u64() as u128 * bound as u128) >> 64) as usize
}

pub fn shuffle<T, R: RngCore>(items: &mut [T], rng: &mut R) {
    for i in (1..items.len()).rev() {
        let j = index(rng, i + 1);
        items.swap(i, j);
    }
}

/// Mixes a base seed with a stream label (splitmix64 finalizer).
pub fn derive(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
