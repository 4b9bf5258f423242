//! Seeded random streams.
//!
//! Every stochastic routine takes a base seed. Independent tasks (replications,
//! grid points, sample blocks) draw from substreams keyed by `(base_seed, index)`
//! of a ChaCha8 generator, so the numbers a task sees do not depend on how the
//! tasks are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Generator for task `index` under `base_seed`.
pub fn substream(base_seed: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(index);
    rng
}

/// Generator for a single-task computation.
pub fn stream(seed: u64) -> StreamRng {
    substream(seed, 0)
}

/// Derives a child seed, used when one seeded call fans out into another
/// seeded call (e.g. one seed per configuration in a sweep).
pub fn derive_seed(base_seed: u64, index: u64) -> u64 {
    let mut z = base_seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
