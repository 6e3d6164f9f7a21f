//! Splittable, counter-based seeding.
//!
//! A stream is identified by a base seed plus a path of integer labels. Child
//! seeds are pure functions of that pair, so work can be split across threads
//! in any order without changing what each piece draws.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed for `path` under `base`.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix(base.wrapping_add(GOLDEN)), |acc, &label| {
        mix(acc ^ mix(label.wrapping_add(GOLDEN).wrapping_mul(GOLDEN)))
    })
}

/// ChaCha stream for `path` under `base`.
pub fn stream(base: u64, path: &[u64]) -> ChaCha20Rng {
    let s = derive_seed(base, path);
    let mut key = [0u8; 32];
    for (i, chunk) in key.chunks_mut(8).enumerate() {
        chunk.copy_from_slice(&mix(s.wrapping_add(i as u64)).to_le_bytes());
    }
    ChaCha20Rng::from_seed(key)
}

/// Seed from the operating system, used outside deterministic mode.
pub fn entropy_seed() -> u64 {
    rand::random()
}
