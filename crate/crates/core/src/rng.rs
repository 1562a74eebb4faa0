//! Seeded streams. Every path gets its own ChaCha8 generator keyed by
//! `seed ^ index`, so ensemble results do not depend on the thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type PathRng = ChaCha8Rng;

/// Stream used for Brownian-bridge refinement of an existing driver.
pub const BRIDGE_STREAM: u64 = 1;

pub fn path_rng(seed: u64, index: u64) -> PathRng {
    ChaCha8Rng::seed_from_u64(seed ^ index)
}

#[inline]
pub fn normal(rng: &mut PathRng) -> f64 {
    StandardNormal.sample(rng)
}
