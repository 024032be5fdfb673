//! Seeded random streams.
//!
//! All randomness in the crate flows through ChaCha20, which is portable and
//! has a stable stream for a given (seed, stream id) on every platform.
//! Distinct purposes draw from distinct stream ids so that, e.g., changing the
//! number of sketch columns never perturbs torus sampling for the same seed.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub(crate) const STREAM_TORUS_ANGLES: u64 = 1;
pub(crate) const STREAM_MEDIAN_SUBSAMPLE: u64 = 2;
pub(crate) const STREAM_SKETCH: u64 = 3;

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
