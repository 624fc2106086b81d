//! Counter-based random streams.
//!
//! ChaCha is a counter-mode generator: a (key, stream) pair addresses an
//! independent keystream, so work unit `i` can draw from `stream(seed, i)` without
//! touching any other unit's state. Results therefore do not depend on execution
//! order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type StreamRng = ChaCha12Rng;

/// Generator for work unit `index` under `seed`.
pub fn stream(seed: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Derives a child seed for nested streams (e.g. bootstrap resamples inside a
/// replication). SplitMix64 finalizer over the pair.
pub fn child_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
