//! Seedable random streams.
//!
//! Every run draws from ChaCha8 keyed by its seed, with a separate stream
//! id per purpose, so initial positions, momentum refreshes and acceptance
//! draws never share state and restarts can run in any order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a random stream is used for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    InitialState = 1,
    Momentum = 2,
    Acceptance = 3,
    SpinOrder = 4,
    Generator = 5,
}

/// A ChaCha8 stream for `(seed, purpose)`.
pub fn stream(seed: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose as u64);
    rng
}

/// Seed for the `index`-th independent run derived from a base seed (SplitMix64 finalizer).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
