//! Deterministic seed derivation and hashing helpers.
//!
//! Every stochastic code path in the engine draws from a `ChaCha8Rng` whose
//! seed is derived here, so a run is a pure function of its master seed.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;

/// FNV-1a over raw bytes.
pub fn fnv1a(data: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in data {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Derive an independent child seed from a parent seed and two stream labels.
pub fn derive_seed(master: u64, stream: u64, salt: u64) -> u64 {
    splitmix64(master ^ splitmix64(stream ^ splitmix64(salt)))
}

/// Seeded RNG for one logical stream.
pub fn rng_for(master: u64, stream: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, stream, salt))
}

/// Seed salts for the engine's independent random streams.
pub mod salt {
    pub const ARCH_SAMPLE: u64 = 0x01;
    pub const EXECUTION: u64 = 0x02;
    pub const FEEDBACK: u64 = 0x03;
    pub const TASK_GEN: u64 = 0x04;
    pub const COUNTERFACTUAL: u64 = 0x05;
    pub const TAG_EMBED: u64 = 0x06;
}
