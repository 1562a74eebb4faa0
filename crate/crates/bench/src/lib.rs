//! Fixtures shared by the benchmarks.

use sle_core::{sample_brownian_driver, DrivingPath};

/// A Brownian driver on `[0, 1]` with `n` steps for `kappa = 8/3`.
pub fn fixture_driver(n: usize, seed: u64) -> DrivingPath {
    sample_brownian_driver(1.0, 1.0 / n as f64, 0.75, seed).expect("valid fixture")
}
