//! Seeded random streams.
//!
//! Every random quantity comes from ChaCha8 seeded with a 64-bit seed. Each
//! logical consumer (a data column, the noise vector, a subsample) reads its
//! own ChaCha stream, so adding consumers never shifts the draws of others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Default seed used whenever the caller does not pass one.
pub const DEFAULT_SEED: u64 = 20_220_328;

/// Stream ids reserved for non-column consumers.
pub const NOISE_STREAM: u64 = u64::MAX;
pub const BERNOULLI_STREAM_BASE: u64 = 1 << 32;

pub fn stream(seed: u64, stream_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a base seed and a path of labels, e.g.
/// `(base, [rep])` or `(base, [j, l])`.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}
