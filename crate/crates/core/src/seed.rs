//! Seed derivation. Every random stream in the crate is seeded from a master
//! seed and an index, so ensembles come out identical whatever the thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 finaliser.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the `index`-th child stream of `master`.
pub fn derive(master: u64, index: u64) -> u64 {
    mix64(master ^ mix64(index.wrapping_add(0x632B_E59B_D9B4_E019)))
}

pub fn rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Named sub-streams so that independent stages of one run never share a seed.
pub fn stream(master: u64, label: &str) -> u64 {
    label
        .bytes()
        .fold(mix64(master), |acc, b| mix64(acc ^ u64::from(b)))
}
