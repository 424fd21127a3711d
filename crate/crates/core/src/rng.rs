//! Seeded random streams.
//!
//! Every random draw in the crate goes through [`stream`], so a master seed
//! plus a counter fully determines the generator regardless of thread
//! scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator type used everywhere in the crate.
pub type Rng = ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent child seed from `master` and a stream counter.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    mix(mix(master) ^ stream.wrapping_mul(0xd1b5_4a32_d192_ed03))
}

/// Generator seeded directly from `seed`.
pub fn from_seed(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Generator for sub-stream `stream` of `master`.
pub fn stream(master: u64, stream: u64) -> Rng {
    Rng::seed_from_u64(derive_seed(master, stream))
}
