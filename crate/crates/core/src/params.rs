//! Closed-form exponent algebra.
//!
//! Everything here is a pure function of `kappa` (or `a = 2/kappa`) and the
//! martingale parameter `r`. The naming follows the usual SLE conventions:
//! `d` is the dimension exponent, `beta` the typical derivative exponent and
//! `xi` the exponent of the concentration event.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Exponents derived from `kappa`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SleParams {
    pub kappa: f64,
    /// `2 / kappa`.
    pub a: f64,
    /// `1 + kappa / 8`.
    pub d: f64,
    /// `d - 3/2`.
    pub beta: f64,
    /// `d (d - 2) + 1 = kappa^2 / 64`.
    pub xi: f64,
    /// False for `kappa >= 8`, where `d`, `beta` and `xi` lose their meaning
    /// as dimension exponents. `a` is valid regardless.
    pub dimension_valid: bool,
}

impl SleParams {
    pub fn from_a(a: f64) -> Result<Self> {
        if !(a > 0.0) || !a.is_finite() {
            return domain(format!("a must be positive and finite, got {a}"));
        }
        derive_exponents(2.0 / a)
    }
}

pub fn derive_exponents(kappa: f64) -> Result<SleParams> {
    if !(kappa > 0.0) || !kappa.is_finite() {
        return domain(format!("kappa must be positive and finite, got {kappa}"));
    }
    let a = 2.0 / kappa;
    let d = 1.0 + kappa / 8.0;
    Ok(SleParams {
        kappa,
        a,
        d,
        beta: d - 1.5,
        xi: d * (d - 2.0) + 1.0,
        dimension_valid: kappa < 8.0,
    })
}

/// The one-parameter family of reverse-flow martingale exponents indexed by `r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MartingaleExponents {
    pub r: f64,
    pub a: f64,
    /// Exponent of `|h_t'(z)|`.
    pub lambda: f64,
    /// Exponent of `Y_t`: `r - r^2 / (4a)`.
    pub y_exponent: f64,
    /// `2a + 1/2 - r`; the time-changed diffusion is positive recurrent iff `q > 0`.
    pub q: f64,
    /// `r/2 + q r + r^2/2`, equal to `2 a lambda`.
    pub theta: f64,
    /// `r - theta`, the growth rate of the exponential moment of `L_t`.
    pub zeta: f64,
    /// `(1 - 2q) / (1 + 2q)`, the stationary mean of `(K^2 - 1)/(K^2 + 1)`.
    pub mu: f64,
    pub recurrent: bool,
}

pub fn lambda_of(r: f64, a: f64) -> f64 {
    r * (1.0 + 1.0 / (2.0 * a)) - r * r / (4.0 * a)
}

pub fn martingale_exponents(r: f64, a: f64) -> MartingaleExponents {
    let q = 2.0 * a + 0.5 - r;
    let theta = r / 2.0 + q * r + r * r / 2.0;
    MartingaleExponents {
        r,
        a,
        lambda: lambda_of(r, a),
        y_exponent: r - r * r / (4.0 * a),
        q,
        theta,
        zeta: r - theta,
        mu: mu_of(q),
        recurrent: q > 0.0,
    }
}

pub fn mu_of(q: f64) -> f64 {
    (1.0 - 2.0 * q) / (1.0 + 2.0 * q)
}

/// Inverse of `r -> lambda(r)` on the branch `0 <= r <= 2a + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InverseExponents {
    pub lambda: f64,
    pub r: f64,
    /// `lambda - r/(2a) = r - r^2/(4a)`; strictly concave in `lambda`.
    pub zeta: f64,
    /// The point where `zeta'(lambda) = -1`: `a + 3/(16a) + 1`.
    pub lambda_c: f64,
    /// `zeta(lambda_c) = a - 1/(16a)`.
    pub zeta_c: f64,
}

pub fn inverse_exponents(lambda: f64, a: f64) -> Result<InverseExponents> {
    if !(a > 0.0) {
        return domain(format!("a must be positive, got {a}"));
    }
    let b = 1.0 + 1.0 / (2.0 * a);
    let radicand = b * b - lambda / a;
    if radicand < 0.0 {
        return domain(format!(
            "lambda = {lambda} exceeds a (1 + 1/(2a))^2 = {}",
            a * b * b
        ));
    }
    let r = 2.0 * a + 1.0 - 2.0 * a * radicand.sqrt();
    Ok(InverseExponents {
        lambda,
        r,
        zeta: lambda - r / (2.0 * a),
        lambda_c: lambda_c(a),
        zeta_c: a - 1.0 / (16.0 * a),
    })
}

pub fn lambda_c(a: f64) -> f64 {
    a + 3.0 / (16.0 * a) + 1.0
}

/// Exponential-moment pair for the weighted diffusion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentPair {
    pub delta: f64,
    pub q: f64,
    /// `((1 + 2q)/4) delta - delta^2/4`.
    pub p: f64,
    /// `q delta - delta^2/4 = 2p - delta/2`.
    pub theta_delta: f64,
    /// The stationary-moment corollaries need `delta < q`.
    pub below_q: bool,
}

pub fn moment_pair(delta: f64, q: f64) -> MomentPair {
    MomentPair {
        delta,
        q,
        p: (1.0 + 2.0 * q) / 4.0 * delta - delta * delta / 4.0,
        theta_delta: q * delta - delta * delta / 4.0,
        below_q: delta < q,
    }
}

/// Largest `r` for which the fixed-time moment upper bound holds.
pub fn upper_bound_r_limit(a: f64) -> f64 {
    if a >= 0.25 {
        6.0 * a - 2.0 * (5.0 * a * a - a).sqrt()
    } else {
        2.0 * a + 0.5
    }
}

/// Admissibility of `(theta, delta)` for the perturbed supermartingale.
pub fn supermartingale_admissible(theta: f64, delta: f64, a: f64) -> bool {
    2.0 * a * theta >= delta.max(delta - 4.0 * a * delta + delta * delta)
}
