//! Keyed random streams.
//!
//! Every draw in the library comes from a generator keyed by
//! `(seed, stream_id, layer, role)`. The key is folded through the SplitMix64
//! finalizer and used to seed a xoshiro256++ generator, so any Monte-Carlo
//! sample (or any single layer of it) can be regenerated in isolation and in
//! any order.

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

pub type StreamRng = Xoshiro256PlusPlus;

/// What a generator is used for. Distinct roles never share draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Weight,
    Mask,
    Input,
    Sampler,
}

impl Role {
    fn code(self) -> u64 {
        match self {
            Role::Weight => 0x57,
            Role::Mask => 0x4d,
            Role::Input => 0x49,
            Role::Sampler => 0x53,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RandomStream {
    pub seed: u64,
    pub stream_id: u64,
}

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RandomStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    fn key(&self, layer: u64, role: Role) -> u64 {
        let mut k = mix64(self.seed);
        k = mix64(k ^ self.stream_id);
        k = mix64(k ^ layer);
        mix64(k ^ role.code())
    }

    /// Generator for one `(layer, role)` slot of this stream.
    pub fn rng(&self, layer: usize, role: Role) -> StreamRng {
        Xoshiro256PlusPlus::seed_from_u64(self.key(layer as u64, role))
    }

    /// Independent sub-stream, e.g. one per resample of a nested Monte-Carlo loop.
    pub fn child(&self, index: u64) -> RandomStream {
        RandomStream {
            seed: self.seed,
            stream_id: mix64(mix64(self.stream_id ^ 0xc41d_5eed) ^ index),
        }
    }
}

pub(crate) fn standard_normal(rng: &mut StreamRng) -> f64 {
    StandardNormal.sample(rng)
}

/// Vector of i.i.d. standard normal entries.
pub fn normal_vec(rng: &mut StreamRng, len: usize) -> Vec<f64> {
    (0..len).map(|_| standard_normal(rng)).collect()
}

/// Uniformly distributed point on the unit sphere in `dim` dimensions.
pub fn unit_vector(rng: &mut StreamRng, dim: usize) -> Vec<f64> {
    loop {
        let v = normal_vec(rng, dim);
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 0.0 {
            return v.into_iter().map(|a| a / norm).collect();
        }
    }
}
