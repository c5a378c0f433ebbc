//! Seed derivation for independent, reproducible random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds a list of keys into one seed. Distinct key lists give
/// (with overwhelming probability) distinct seeds.
pub fn derive_seed(keys: &[u64]) -> u64 {
    keys.iter()
        .fold(0x5eed_u64, |acc, &k| splitmix(acc ^ splitmix(k)))
}

/// A generator for the stream identified by `keys`.
pub fn stream(keys: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(keys))
}
