//! Seed handling.
//!
//! Every random draw in the crate comes from ChaCha8 keyed by a 64-bit seed
//! plus a 64-bit stream id. ChaCha is counter based, so a derived seed is the
//! `index`-th 64-bit word of stream `domain`: reproducible, independent of
//! evaluation order, and cheap to compute for any index.
//!
//! The generator (ChaCha8 via `rand_chacha` 0.9, `seed_from_u64` key
//! expansion) is fixed for a release; changing it changes every sampled value.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream domain for asset ensembles.
pub const DOMAIN_ENSEMBLE: u64 = 1;
/// Stream domain for factor series.
pub const DOMAIN_FACTORS: u64 = 2;
/// Stream domain for residual noise.
pub const DOMAIN_NOISE: u64 = 3;
/// Stream domains for scan points start here (offset by the axis tag).
pub const DOMAIN_SCAN: u64 = 16;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Child seed for `(domain, index)` under `base`.
pub fn derive_seed(base: u64, domain: u64, index: u64) -> u64 {
    use rand::RngCore;
    let mut rng = stream_rng(base, domain);
    rng.set_word_pos(u128::from(index) * 2);
    rng.next_u64()
}
