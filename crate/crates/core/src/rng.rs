//! Deterministic random streams.
//!
//! Every random draw in a simulation comes from a ChaCha8 generator whose key
//! is derived from `(seed, purpose, t)` and whose stream number is an index
//! (agent id for consumption, 0 otherwise). A step is therefore a pure function
//! of the time-`t` state, and per-agent draws do not depend on scheduling.
//!
//! Key derivation uses the SplitMix64 finalizer [`mix64`]:
//!
//! ```text
//! key = mix64(seed ^ mix64(purpose * 0x9E3779B97F4A7C15 ^ mix64(t)))
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used for all simulation draws (rand_chacha 0.9, ChaCha8).
pub type SimRng = ChaCha8Rng;

/// 2^64 divided by the golden ratio.
pub const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output finalizer. A bijection on `u64`.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// What a stream is used for. Distinct purposes never share a key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Init = 1,
    Produce = 2,
    Consume = 3,
}

/// Opens the substream `index` of the generator keyed by `(seed, purpose, t)`.
pub fn substream(seed: u64, purpose: Purpose, t: u64, index: u64) -> SimRng {
    let key = mix64(seed ^ mix64((purpose as u64).wrapping_mul(GOLDEN_GAMMA) ^ mix64(t)));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(index);
    rng
}
