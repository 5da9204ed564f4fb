//! Reward generation for simulations.
//!
//! Each arm owns an independent random stream, so the `n`-th sample of an arm
//! is fixed by the seed no matter how pulls interleave. Offline data drawn
//! first from the same streams makes datasets of different sizes nested
//! prefixes of each other.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::oracle::BanditInstance;
use crate::spef::Family;

/// Anything that can produce one reward for a requested arm.
pub trait RewardSource {
    fn sample(&mut self, arm: usize) -> f64;
}

impl<F: FnMut(usize) -> f64> RewardSource for F {
    fn sample(&mut self, arm: usize) -> f64 {
        self(arm)
    }
}

/// SplitMix64 finaliser.
pub fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Folds a sequence of words into one seed: `mix64(... mix64(mix64(a) ^ b) ...)`.
pub fn derive_seed(words: &[u64]) -> u64 {
    words.iter().fold(0x6A09_E667_F3BC_C908, |acc, &w| mix64(acc ^ w))
}

/// Per-arm i.i.d. reward streams for a ground-truth instance.
#[derive(Debug, Clone)]
pub struct ArmStreams {
    family: Family,
    means: Vec<f64>,
    rngs: Vec<ChaCha8Rng>,
    drawn: Vec<u64>,
}

impl ArmStreams {
    pub fn new(instance: &BanditInstance, seed: u64) -> Self {
        let rngs = (0..instance.num_arms())
            .map(|a| ChaCha8Rng::seed_from_u64(derive_seed(&[seed, a as u64])))
            .collect();
        Self {
            family: instance.family(),
            means: instance.means().to_vec(),
            rngs,
            drawn: vec![0; instance.num_arms()],
        }
    }

    /// Samples drawn so far from each arm.
    pub fn drawn(&self) -> &[u64] {
        &self.drawn
    }
}

impl RewardSource for ArmStreams {
    fn sample(&mut self, arm: usize) -> f64 {
        self.drawn[arm] += 1;
        let rng = &mut self.rngs[arm];
        match self.family {
            Family::Bernoulli => {
                if rng.random::<f64>() < self.means[arm] {
                    1.0
                } else {
                    0.0
                }
            }
            Family::Gaussian => self.means[arm] + rng.sample::<f64, _>(StandardNormal),
        }
    }
}
