//! Named random sub-streams.
//!
//! Every randomized stage draws from its own ChaCha stream derived from the
//! single top-level seed, so changing how much randomness one stage consumes
//! never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Split = 1,
    Init = 2,
    Shuffle = 3,
    Synth = 4,
    /// Derivation of per-repeat seeds inside experiments.
    Repeat = 5,
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for `stream` under `seed`.
pub fn stream(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed));
    rng.set_stream(stream as u64);
    rng
}

/// Deterministic child seed, e.g. one per experiment repeat.
pub fn derive_seed(seed: u64, stream: Stream, index: u64) -> u64 {
    mix(mix(seed ^ ((stream as u64) << 56)) ^ mix(index.wrapping_add(0x5851_F42D_4C95_7F2D)))
}
