//! Deterministic derivation of independent RNG streams from a run seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer; decorrelates nearby seeds.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// A reproducible RNG stream identified by `(seed, tag)`.
pub fn stream(seed: u64, tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(tag)))
}

/// Folds extra identifiers (iteration, epoch, worker, ...) into a seed.
pub fn subseed(seed: u64, tag: u64, parts: &[u64]) -> u64 {
    let mut x = seed ^ splitmix64(tag);
    for p in parts {
        x = splitmix64(x ^ splitmix64(*p));
    }
    x
}

/// Stream keyed by `(seed, tag, parts)`.
pub fn substream(seed: u64, tag: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(subseed(seed, tag, parts))
}

/// Stream tags used by the trainer; fixed so runs are reproducible.
pub mod tags {
    pub const WORKER_BASE: u64 = 0x1000;
    pub const PPO_SHUFFLE: u64 = 0x2000;
    pub const EXPERT_BATCH: u64 = 0x3000;
    pub const DISC_BATCH: u64 = 0x4000;
    pub const IDM_FIT: u64 = 0x5000;
    pub const SUBSAMPLE: u64 = 0x6000;
    pub const INIT: u64 = 0x7000;
    pub const REG_MC: u64 = 0x8000;
}
