//! Deterministic derived random streams.
//!
//! Every stochastic draw (dropout masks, scheduled sampling, policy samples)
//! comes from a stream keyed by the run seed and a path of counters, so two
//! runs that reach the same (seed, path) see the same randomness regardless
//! of what else they computed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const PURPOSE_ENCODE: u64 = 1;
pub const PURPOSE_MLE: u64 = 2;
pub const PURPOSE_SAMPLE: u64 = 3;
pub const PURPOSE_ORDER: u64 = 4;

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// A ChaCha stream for `seed` and the counter path `parts`.
pub fn stream(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    let mut k = splitmix(seed);
    for &p in parts {
        k = splitmix(k ^ splitmix(p.wrapping_add(0x632b_e59b_d9b4_e019)));
    }
    ChaCha8Rng::seed_from_u64(k)
}
