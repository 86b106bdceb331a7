//! Deterministic random-stream derivation. Every randomized routine takes a
//! `(seed, tag)` pair so that independent components draw from decorrelated
//! streams while whole-program output stays a pure function of the seed.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A reproducible stream for substream `tag` of master `seed`.
pub fn stream(seed: u64, tag: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(splitmix(seed).wrapping_add(splitmix(splitmix(tag) ^ 0xa5a5_a5a5_5a5a_5a5a)))
}
