//! Seeded randomness.
//!
//! Every stochastic routine in the crate draws from ChaCha8 (`rand_chacha::ChaCha8Rng`)
//! seeded with a 64-bit integer through `SeedableRng::seed_from_u64`. Sub-streams are
//! derived by mixing a tag into the seed so that unrelated consumers never share a stream.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng as Rng;

pub fn seeded(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Derive an independent seed from a base seed and a stream tag (splitmix64 finalizer).
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn substream(seed: u64, tag: u64) -> Rng {
    seeded(derive_seed(seed, tag))
}
