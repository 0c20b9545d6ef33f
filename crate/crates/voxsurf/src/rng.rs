//! Counter-based RNG streams.
//!
//! Every random draw in the toolkit is keyed by (seed, domain, counter) so
//! that work can be distributed across threads in any order while staying
//! bit-reproducible for a fixed seed.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream domains. Keeps independent parts of the pipeline from sharing a
/// counter space.
#[derive(Debug, Clone, Copy)]
pub enum Domain {
    EmbeddingInit = 1,
    ModelInit = 2,
    RaySampling = 3,
    Resampling = 4,
    PruneSampling = 5,
    RegPoints = 6,
    BatchSelect = 7,
    DepthPoints = 8,
    PointSampling = 9,
}

/// A deterministic RNG for one (seed, domain, counter) triple.
pub fn stream(seed: u64, domain: Domain, counter: u64) -> ChaCha8Rng {
    // SplitMix64 finalizer over the packed key; decorrelates nearby counters.
    let mut x = seed
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add((domain as u64) << 56)
        .wrapping_add(counter);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^= x >> 31;
    let mut rng = ChaCha8Rng::seed_from_u64(x);
    rng.set_stream(domain as u64);
    rng
}
