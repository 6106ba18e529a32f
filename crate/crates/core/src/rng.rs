//! Seed derivation.
//!
//! Every random consumer gets its own ChaCha stream whose key is derived from a
//! base seed and a list of tags (stream name, epoch, domain id, ...). Adding a
//! new consumer never shifts the draws seen by existing ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a, used to turn stream names into integer tags.
pub fn hash_str(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix(base), |acc, &t| splitmix(acc ^ splitmix(t)))
}

/// Independent stream for `(base, name, tags...)`.
pub fn stream(base: u64, name: &str, tags: &[u64]) -> Rng {
    let mut all = Vec::with_capacity(tags.len() + 1);
    all.push(hash_str(name));
    all.extend_from_slice(tags);
    ChaCha8Rng::seed_from_u64(derive_seed(base, &all))
}
