//! Numerical laboratory for chordal SLE.
//!
//! Traces come from a vertical-slit discretization of the Loewner equation;
//! marked points are followed under the forward chain and the reverse flow,
//! and the diffusion, martingale and estimator modules build Monte Carlo
//! checks on top.

pub mod diffusion;
pub mod dimension;
pub mod driver;
pub mod ensemble;
pub mod error;
pub mod green;
pub mod invariants;
pub mod loewner;
pub mod martingale;
pub mod natural;
pub mod params;
pub mod quadrature;
pub mod rng;
pub mod stats;
pub mod table;

pub use num_complex::Complex64;

pub use driver::{brownian_from_key, constant_driver, reverse_driver, sample_brownian_driver, DrivingPath};
pub use error::{Error, Result};
pub use loewner::{build_chain, forward_point, reverse_point, trace, Integrator, ReverseFlowState, SlitChain, SlitMap, Trace};
pub use params::{
    derive_exponents, inverse_exponents, martingale_exponents, moment_pair, InverseExponents,
    MartingaleExponents, MomentPair, SleParams,
};
pub use stats::{EnsembleStats, Welford};
