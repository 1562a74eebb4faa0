//! Distortion diagnostics on the rectangle `R(r) = [-r, r] x [1/r, r]`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::slit::SlitChain;
use crate::error::{domain, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionReport {
    pub r: f64,
    pub alpha: f64,
    pub n_pairs: usize,
    /// max over pairs of `log |f'(w)| - log |f'(z)|`.
    pub max_log_ratio: f64,
    /// `alpha log(2r)`.
    pub bound: f64,
    pub exceed_count: usize,
}

pub fn in_rect(z: Complex64, r: f64) -> bool {
    z.re.abs() <= r && z.im >= 1.0 / r && z.im <= r
}

/// Compares `|f_hat'(w)| / |f_hat'(z)|` with `(2r)^alpha` over `pairs`, where
/// `f_hat(z) = f_{t_k}(z + U_{t_k})`. Diagnostic only.
pub fn rect_distortion_check(
    chain: &SlitChain,
    k: usize,
    r: f64,
    alpha: f64,
    pairs: &[(Complex64, Complex64)],
) -> Result<DistortionReport> {
    if r < 1.0 {
        return domain(format!("rectangle parameter r must be >= 1, got {r}"));
    }
    let u = chain.driver_at(k);
    let bound = alpha * (2.0 * r).ln();
    let mut max_log_ratio = f64::NEG_INFINITY;
    let mut exceed = 0;
    for &(z, w) in pairs {
        if !in_rect(z, r) || !in_rect(w, r) {
            return domain(format!("pair ({z}, {w}) leaves R({r})"));
        }
        let dz = chain.inverse_at(k, z + u)?.deriv.norm().ln();
        let dw = chain.inverse_at(k, w + u)?.deriv.norm().ln();
        let lr = dw - dz;
        if lr > bound {
            exceed += 1;
        }
        max_log_ratio = max_log_ratio.max(lr);
    }
    if pairs.is_empty() {
        max_log_ratio = 0.0;
    }
    Ok(DistortionReport { r, alpha, n_pairs: pairs.len(), max_log_ratio, bound, exceed_count: exceed })
}

/// Koebe quarter check at an interior `z`: returns
/// `(dist[f(z), boundary samples], Im z |f'(z)| / 4)`. The boundary is the
/// real line together with `curve`; sampling the curve can only overstate
/// the distance, so a failure is genuine.
pub fn koebe_check(chain: &SlitChain, k: usize, z: Complex64, curve: &[Complex64]) -> Result<(f64, f64)> {
    let f = chain.inverse_at(k, z)?;
    let mut dist = f.value.im;
    for p in curve {
        dist = dist.min((f.value - p).norm());
    }
    Ok((dist, z.im * f.deriv.norm() / 4.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::{constant_driver, sample_brownian_driver};
    use crate::loewner::slit::build_chain;
    use crate::loewner::trace::trace_of_chain;
    use rand::{Rng, SeedableRng};

    #[test]
    fn identity_chain_ratio_one() {
        let ch = SlitChain { dt: 0.1, a: 0.5, maps: vec![] };
        let pairs = [(Complex64::new(0.0, 1.0), Complex64::new(1.5, 0.6))];
        let rep = rect_distortion_check(&ch, 0, 2.0, 1.0, &pairs).unwrap();
        assert_eq!(rep.max_log_ratio, 0.0);
    }

    #[test]
    fn same_point_ratio_one() {
        let d = sample_brownian_driver(1.0, 0.01, 0.75, 1).unwrap();
        let ch = build_chain(&d);
        let z = Complex64::new(0.2, 1.0);
        let rep = rect_distortion_check(&ch, 100, 2.0, 1.0, &[(z, z)]).unwrap();
        assert_eq!(rep.max_log_ratio, 0.0);
    }

    #[test]
    fn rejects_points_outside() {
        let ch = SlitChain { dt: 0.1, a: 0.5, maps: vec![] };
        let pairs = [(Complex64::new(0.0, 0.1), Complex64::new(0.0, 1.0))];
        assert!(rect_distortion_check(&ch, 0, 2.0, 1.0, &pairs).is_err());
    }

    #[test]
    fn brownian_ratio_finite() {
        let d = sample_brownian_driver(1.0, 0.01, 0.75, 8).unwrap();
        let ch = build_chain(&d);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut pt = || Complex64::new(rng.random_range(-2.0..2.0), rng.random_range(0.5..2.0));
        let pairs: Vec<_> = (0..100).map(|_| (pt(), pt())).collect();
        let rep = rect_distortion_check(&ch, 100, 2.0, 4.0, &pairs).unwrap();
        assert!(rep.max_log_ratio.is_finite());
    }

    #[test]
    fn koebe_holds() {
        for d in [
            constant_driver(1.0, 0.01, 0.5, 0.0).unwrap(),
            sample_brownian_driver(1.0, 0.01, 0.75, 2).unwrap(),
        ] {
            let ch = build_chain(&d);
            let tr = trace_of_chain(&ch, 0.0);
            for z in [Complex64::new(0.0, 0.3), Complex64::new(1.0, 0.1), Complex64::new(-0.5, 2.0)] {
                let (dist, b) = koebe_check(&ch, 100, z + ch.driver_at(100), &tr.points).unwrap();
                assert!(dist >= b, "dist={dist} bound={b}");
            }
        }
    }
}
