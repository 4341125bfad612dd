//! Deterministic randomness plumbing.
//!
//! Every stochastic routine in this crate draws from ChaCha8 streams that are
//! keyed by an explicit `(seed, stream)` pair and addressed by draw index, so
//! results never depend on thread count or evaluation order. Monte Carlo
//! paths get one stream each, training samples derive their own sub-seed from
//! the run seed, and any subrange of draws can be recomputed in isolation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Weyl increment used by splitmix64; 2^64 / phi rounded to odd.
const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// splitmix64 finalizer. Bijective on u64, good avalanche, cheap.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive an independent sub-seed for the `index`-th unit of work under a
/// root seed. Distinct indices give unrelated seeds; the map is deterministic
/// so any single unit can be regenerated without touching its neighbours.
pub fn derive_seed(root: u64, index: u64) -> u64 {
    splitmix64(root ^ index.wrapping_mul(GOLDEN_GAMMA))
}

/// Generator for one stream (e.g. one Monte Carlo path) of the keyed family.
/// Streams with the same seed and different ids never overlap.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// The `index`-th uniform f64 in [0, 1) of stream `(seed, stream)`.
///
/// Consistent with drawing sequentially from [`stream_rng`]: each f64 costs
/// two 32-bit words of the underlying stream, so draw `i` lives at word
/// position `2 i`. This is the random-access view used to recompute
/// subranges; hot loops should draw sequentially instead.
pub fn uniform_at(seed: u64, stream: u64, index: u64) -> f64 {
    let mut rng = stream_rng(seed, stream);
    rng.set_word_pos(u128::from(index) * 2);
    rng.random::<f64>()
}
