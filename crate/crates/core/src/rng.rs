//! Deterministic named RNG sub-streams.
//!
//! A run owns one root seed. Every consumer (instance generation, weight shuffling,
//! rollout sampling, parameter init, ...) derives its own stream from the root seed,
//! a textual name, and optional integer indices, so adding or reordering consumers
//! never perturbs the draws of another.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

#[derive(Debug, Clone, Copy)]
pub struct SeedStreams {
    root: u64,
}

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

impl SeedStreams {
    pub fn new(root: u64) -> Self {
        SeedStreams { root }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    /// Derives the 64-bit seed for the sub-stream `(name, indices)`.
    pub fn derive(&self, name: &str, indices: &[u64]) -> u64 {
        let mut h = splitmix(self.root ^ fnv1a(name.as_bytes()));
        for &i in indices {
            h = splitmix(h ^ i.wrapping_mul(FNV_PRIME));
        }
        h
    }

    /// RNG for the sub-stream `(name, indices)`.
    pub fn stream(&self, name: &str, indices: &[u64]) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(self.derive(name, indices))
    }
}
