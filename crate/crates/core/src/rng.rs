//! Seeded random streams.
//!
//! Every random draw in the crate goes through [`seeded`] or [`substream`], so a
//! run is fully determined by its seeds on every platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used throughout the crate.
pub type CrucRng = ChaCha8Rng;

/// Algorithm name embedded in output metadata.
pub const RNG_ALGORITHM: &str = "ChaCha8Rng/rand_chacha-0.9";

pub fn seeded(seed: u64) -> CrucRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `stream` under the same key as `seeded(seed)`.
///
/// Stream 0 is the stream returned by [`seeded`].
pub fn substream(seed: u64, stream: u64) -> CrucRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives a child seed from a parent seed and an index (splitmix64 finalizer).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
