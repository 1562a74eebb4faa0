//! Green's function of the forward flow: the local martingale
//! `Upsilon^{d-2} sin^{4a-1} Theta`, the weighted angle diffusion, and the
//! one-point estimate `P{Upsilon_inf <= eps} ~ c_* G(z) eps^{2-d}`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::driver::brownian_from_key;
use crate::ensemble::map_paths;
use crate::error::{domain, Result};
use crate::loewner::{build_chain, forward_point};
use crate::quadrature::GaussLegendre;
use crate::rng::{normal, path_rng};
use crate::stats::{ks_distance, EnsembleStats, Welford};

/// Angles are kept in `[CLIP, pi - CLIP]` before raising `sin` to a
/// possibly negative power.
pub const THETA_CLIP: f64 = 1e-6;

fn dim(a: f64) -> f64 {
    1.0 + 1.0 / (4.0 * a)
}

/// `G(y(x + i)) = y^{d-2} (x^2 + 1)^{1/2 - 2a}`.
pub fn green_function(a: f64, z: Complex64) -> f64 {
    let y = z.im;
    let x = z.re / y;
    y.powf(dim(a) - 2.0) * (x * x + 1.0).powf(0.5 - 2.0 * a)
}

/// `int_0^pi sin^p`.
pub fn sine_power_integral(p: f64) -> f64 {
    GaussLegendre::new(32).composite(0.0, PI, 64, |t| t.sin().powf(p))
}

/// `c_* = 2 / int_0^pi sin^{4a}`.
pub fn c_star(a: f64) -> f64 {
    2.0 / sine_power_integral(4.0 * a)
}

/// `Upsilon^{d-2} sin^{4a-1} Theta`, with `Theta` clipped; the flag reports
/// whether clipping happened.
pub fn green_martingale_value(a: f64, upsilon: f64, theta: f64) -> (f64, bool) {
    let clipped = !(THETA_CLIP..=PI - THETA_CLIP).contains(&theta);
    let th = theta.clamp(THETA_CLIP, PI - THETA_CLIP);
    (upsilon.powf(dim(a) - 2.0) * th.sin().powf(4.0 * a - 1.0), clipped)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreenRow {
    pub t: f64,
    pub stats: EnsembleStats,
    pub clip_count: u64,
    /// Paths stopped by the `Upsilon` floor or by swallowing before `t`.
    pub stopped: u64,
    /// The floor actually used; see [`effective_floor`].
    pub floor: f64,
}

/// The chain cannot resolve `Upsilon` below the height of one slit,
/// `sqrt(2 a dt)`, so a smaller requested floor is raised to that.
pub fn effective_floor(floor: f64, a: f64, dt: f64) -> f64 {
    floor.max((2.0 * a * dt).sqrt())
}

/// Mean of the Green martingale at `t` stopped when `Upsilon <= floor` or
/// the point is swallowed, against `G(z)`.
pub fn green_martingale_test(a: f64, z: Complex64, t_list: &[f64], n_paths: usize, dt: f64, seed: u64, floor: f64) -> Result<Vec<GreenRow>> {
    if !(a > 0.25) {
        return domain(format!("the Green martingale needs a > 1/4, got {a}"));
    }
    if !(z.im > 0.0) {
        return domain(format!("z must lie in the upper half-plane, got {z}"));
    }
    let target = green_function(a, z);
    let t_max = t_list.iter().cloned().fold(0.0, f64::max);
    let floor = effective_floor(floor, a, dt);
    let per_path = map_paths(n_paths, |i| {
        if t_max == 0.0 {
            return t_list.iter().map(|_| (target, false, false)).collect::<Vec<_>>();
        }
        let d = brownian_from_key(t_max, dt, a, seed, i).expect("valid grid");
        let st = forward_point(&build_chain(&d), z).expect("interior point");
        let ups = st.upsilon();
        let stop = ups.iter().position(|&u| u <= floor).unwrap_or(st.len() - 1);
        t_list
            .iter()
            .map(|&t| {
                let k = st.index_at(t);
                let swallowed = st.swallowed_at.is_some_and(|s| s <= t + 1e-12);
                let k = k.min(stop);
                let (v, clipped) = green_martingale_value(a, ups[k], st.z[k].arg());
                (v, clipped, k == stop && (stop < st.len() - 1 || swallowed || ups[k] <= floor))
            })
            .collect()
    });
    Ok(t_list
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let mut w = Welford::default();
            let (mut clips, mut stopped) = (0, 0);
            for p in &per_path {
                let (v, c, s) = p[j];
                w.push(v);
                clips += c as u64;
                stopped += s as u64;
            }
            GreenRow { t, stats: EnsembleStats::new(&w, target, dt), clip_count: clips, stopped, floor }
        })
        .collect())
}

/// Tabulated CDF of the density proportional to `sin^{4a}` on `[0, pi]`.
struct SineCdf {
    h: f64,
    table: Vec<f64>,
}

impl SineCdf {
    fn new(a: f64, n: usize) -> Self {
        let gl = GaussLegendre::new(8);
        let h = PI / n as f64;
        let mut table = vec![0.0; n + 1];
        for k in 0..n {
            let lo = k as f64 * h;
            table[k + 1] = table[k] + gl.integrate(lo, lo + h, |t| t.sin().powf(4.0 * a));
        }
        let total = table[n];
        table.iter_mut().for_each(|v| *v /= total);
        SineCdf { h, table }
    }

    fn cdf(&self, theta: f64) -> f64 {
        let x = (theta / self.h).clamp(0.0, (self.table.len() - 1) as f64);
        let k = (x.floor() as usize).min(self.table.len() - 2);
        let f = x - k as f64;
        self.table[k] * (1.0 - f) + self.table[k + 1] * f
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleStationarity {
    pub a: f64,
    pub n_samples: usize,
    pub ks_distance: f64,
}

/// Long-run samples of `dTheta = 2a cot(Theta) dt + dW` on `(0, pi)`,
/// compared with the density `∝ sin^{4a}`. The scheme runs on
/// `X = cos Theta`, which solves `dX = -(2a + 1/2) X dt - sqrt(1 - X^2) dW`
/// with bounded coefficients, so the singular drift never enters.
pub fn angle_stationarity(a: f64, t: f64, dt: f64, sample_every: f64, n_paths: usize, seed: u64) -> AngleStationarity {
    let burn = 5.0;
    let n = ((burn + t) / dt).round() as usize;
    let b = (burn / dt).round() as usize;
    let stride = ((sample_every / dt).round() as usize).max(1);
    let sd = dt.sqrt();
    let k = 2.0 * a + 0.5;
    let per_path = map_paths(n_paths, |i| {
        let mut rng = path_rng(seed, i);
        let mut x: f64 = 0.0;
        let mut out = Vec::with_capacity((n - b) / stride + 1);
        for step in 1..=n {
            x += -k * x * dt - (1.0 - x * x).max(0.0).sqrt() * sd * normal(&mut rng);
            x = x.clamp(-1.0, 1.0);
            if step >= b && (step - b) % stride == 0 {
                out.push(x.acos());
            }
        }
        out
    });
    let mut all: Vec<f64> = per_path.into_iter().flatten().collect();
    let cdf = SineCdf::new(a, 4096);
    let ks = ks_distance(&mut all, |x| cdf.cdf(x));
    AngleStationarity { a, n_samples: all.len(), ks_distance: ks }
}

/// Beyond this `|phi|` the drift is `mu' sign(phi)` to within `2e-5`, and the
/// remaining contribution to the integral is of the same order.
const PHI_FAR: f64 = 6.0;
const PHI_EXIT: f64 = 7.0;

/// `log(Im z / Upsilon_inf)` for one path, using the angular coordinate
/// `phi = log tan(Theta/2)` of `Z_t = g_t(z) - U_t` in the clock
/// `ds = dt / |Z_t|^2`. There `dphi = (2a - 1/2) tanh(phi) ds + dW` and
/// `d log Upsilon = -2a sech^2(phi) ds`. Paths are stopped once the
/// accumulated value exceeds `cap`; far excursions use the exact return
/// probability of drifted Brownian motion.
pub fn log_upsilon_drop<R: Rng>(a: f64, theta0: f64, ds: f64, cap: f64, rng: &mut R) -> f64 {
    let drift = 2.0 * a - 0.5;
    let return_prob = (-2.0 * drift * (PHI_EXIT - PHI_FAR)).exp();
    let sd = ds.sqrt();
    let mut phi = (theta0 / 2.0).tan().ln();
    let mut acc = 0.0;
    let (_, mut sech2_prev) = tanh_sech2(phi);
    loop {
        let z: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng);
        let (th, _) = tanh_sech2(phi);
        phi += drift * th * ds + sd * z;
        let (_, s2) = tanh_sech2(phi);
        acc += a * (sech2_prev + s2) * ds;
        sech2_prev = s2;
        if acc >= cap {
            return acc;
        }
        if phi.abs() >= PHI_EXIT {
            if rng.random::<f64>() < return_prob {
                phi = PHI_FAR * phi.signum();
                sech2_prev = tanh_sech2(phi).1;
            } else {
                return acc;
            }
        }
    }
}

/// `(tanh x, sech^2 x)` from a single exponential.
#[inline]
fn tanh_sech2(x: f64) -> (f64, f64) {
    let e = (-2.0 * x.abs()).exp();
    let inv = 1.0 / (1.0 + e);
    ((1.0 - e) * inv * x.signum(), 4.0 * e * inv * inv)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnePointRow {
    pub z: Complex64,
    pub eps: f64,
    pub probability: f64,
    pub stderr: f64,
    pub green: f64,
    /// `P / (G(z) eps^{2-d})`.
    pub ratio: f64,
    pub ratio_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnePointTable {
    pub a: f64,
    pub c_star: f64,
    pub rows: Vec<OnePointRow>,
}

/// `P{Upsilon_inf <= eps}` for each `z` and `eps` from `n_paths` angle paths.
pub fn one_point_green_estimate(a: f64, z_list: &[Complex64], eps_list: &[f64], n_paths: usize, ds: f64, seed: u64) -> Result<OnePointTable> {
    if !(a > 0.25) {
        return domain(format!("the one-point estimate needs kappa < 8 (a > 1/4), got a = {a}"));
    }
    let d = dim(a);
    let mut rows = Vec::new();
    for (zi, &z) in z_list.iter().enumerate() {
        if !(z.im > 0.0) {
            return domain(format!("z must lie in the upper half-plane, got {z}"));
        }
        let eps_min = eps_list.iter().cloned().fold(f64::INFINITY, f64::min);
        let cap = (z.im / eps_min).ln();
        let zseed = seed.wrapping_add((zi as u64) << 40);
        let drops = map_paths(n_paths, |i| {
            let mut rng = path_rng(zseed, i);
            log_upsilon_drop(a, z.arg(), ds, cap, &mut rng)
        });
        let g = green_function(a, z);
        for &eps in eps_list {
            let need = (z.im / eps).ln();
            let hits = drops.iter().filter(|&&v| v >= need).count() as f64;
            let p = hits / n_paths as f64;
            let se = (p * (1.0 - p) / n_paths as f64).sqrt();
            let norm = g * eps.powf(2.0 - d);
            rows.push(OnePointRow { z, eps, probability: p, stderr: se, green: g, ratio: p / norm, ratio_stderr: se / norm });
        }
    }
    Ok(OnePointTable { a, c_star: c_star(a), rows })
}

/// Chain-based `P{Upsilon_T <= eps}` at a finite time, for cross-checks.
pub fn chain_upsilon_probability(a: f64, z: Complex64, eps: f64, t: f64, dt: f64, n_paths: usize, seed: u64) -> (f64, f64) {
    let hits: Vec<f64> = map_paths(n_paths, |i| {
        let d = brownian_from_key(t, dt, a, seed, i).expect("valid grid");
        let st = forward_point(&build_chain(&d), z).expect("interior point");
        let last = st.len() - 1;
        (st.upsilon_at_index(last) <= eps) as u8 as f64
    });
    let w = Welford::from_slice(&hits);
    (w.mean, w.stderr())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn green_values() {
        for a in [0.5, 0.75] {
            assert_abs_diff_eq!(green_function(a, Complex64::new(0.0, 1.0)), 1.0, epsilon = 1e-15);
            let d = dim(a);
            let expect = 2f64.powf(d - 2.0) * 2f64.powf(0.5 - 2.0 * a);
            assert_abs_diff_eq!(green_function(a, Complex64::new(2.0, 2.0)), expect, epsilon = 1e-14);
        }
    }

    #[test]
    fn martingale_at_time_zero_is_green() {
        for a in [0.5, 0.75, 1.0 / 3.0] {
            for z in [Complex64::new(0.0, 1.0), Complex64::new(1.0, 1.0), Complex64::new(-0.5, 2.0)] {
                let (v, _) = green_martingale_value(a, z.im, z.arg());
                assert_abs_diff_eq!(v, green_function(a, z), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn c_star_kappa_four() {
        assert_abs_diff_eq!(c_star(0.5), 4.0 / PI, epsilon = 1e-12);
        assert_abs_diff_eq!(sine_power_integral(2.0), PI / 2.0, epsilon = 1e-13);
    }

    #[test]
    fn time_zero_test_is_exact() {
        let rows = green_martingale_test(0.75, Complex64::new(0.0, 1.0), &[0.0], 5, 1e-2, 1, 1e-3).unwrap();
        assert_eq!(rows[0].stats.mean, 1.0);
        assert!(green_martingale_test(0.25, Complex64::new(0.0, 1.0), &[0.0], 5, 1e-2, 1, 1e-3).is_err());
    }

    #[test]
    fn clipping_is_reported() {
        let (_, c) = green_martingale_value(0.75, 0.1, 1e-9);
        assert!(c);
        let (_, c) = green_martingale_value(0.75, 0.1, 1.0);
        assert!(!c);
    }

    #[test]
    fn tanh_sech2_identities() {
        for x in [-20.0, -1.3, 0.0, 0.4, 7.0] {
            let (t, s) = tanh_sech2(x);
            assert_abs_diff_eq!(t, f64::tanh(x), epsilon = 1e-15);
            assert_abs_diff_eq!(s, 1.0 / f64::cosh(x).powi(2), epsilon = 1e-15);
        }
    }

    #[test]
    fn floor_raised_to_resolution() {
        assert_abs_diff_eq!(effective_floor(1e-3, 0.5, 1e-3), 1e-3f64.sqrt(), epsilon = 1e-15);
        assert_eq!(effective_floor(0.2, 0.5, 1e-3), 0.2);
    }

    #[test]
    fn sine_cdf_endpoints() {
        let c = SineCdf::new(0.75, 512);
        assert_eq!(c.cdf(0.0), 0.0);
        assert_abs_diff_eq!(c.cdf(PI), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(c.cdf(PI / 2.0), 0.5, epsilon = 1e-12);
    }
}
