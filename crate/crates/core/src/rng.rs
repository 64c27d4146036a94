//! Seeded random streams.
//!
//! ChaCha8 is used everywhere: its output for a given seed is fixed across
//! platforms and crate versions, which `StdRng` does not promise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `stream` of the generator seeded with `seed`.
///
/// Work split across threads draws from `stream(seed, item_index)` so results
/// do not depend on scheduling.
pub fn stream(seed: u64, stream: u64) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
