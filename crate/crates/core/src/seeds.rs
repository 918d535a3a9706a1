//! Deterministic seed splitting.
//!
//! Every random stream in a run is addressed by `(master seed, domain, index)`.
//! Child seeds come from a SplitMix64 finalizer applied to a counter, so adding
//! realizations or trajectories never perturbs the streams that already exist.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domains keep streams used for different purposes apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Ensemble = 1,
    Noise = 2,
    Sweep = 3,
    Walks = 4,
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed number `index` of `master` in `domain`.
pub fn derive_seed(master: u64, domain: Domain, index: u64) -> u64 {
    let d = splitmix64(master ^ (domain as u64).wrapping_mul(0xD1B5_4A32_D192_ED03));
    splitmix64(d.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

/// Independent generator for item `index` of a seeded collection; the ChaCha
/// stream id carries the index.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
