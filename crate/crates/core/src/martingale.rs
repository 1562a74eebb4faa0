//! Monte Carlo checks of the reverse-flow martingale family, the
//! derivative moments and the perturbed supermartingale.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::driver::brownian_from_key;
use crate::ensemble::map_paths;
use crate::error::{domain, Result};
use crate::loewner::{reverse_point, Integrator, ReverseFlowState};
use crate::params::{lambda_of, supermartingale_admissible, upper_bound_r_limit};
use crate::rng::BRIDGE_STREAM;
use crate::stats::{ols, EnsembleStats, LineFit, Welford};

/// `M_t = |h_t'(z)|^lambda Y_t^{r - r^2/(4a)} (R_t^2 + 1)^{r/2}` with `R = X/Y`.
pub fn reverse_martingale_value(st: &ReverseFlowState, k: usize, r: f64, a: f64) -> f64 {
    martingale_from_parts(st.z[k], st.log_abs_deriv[k], r, a)
}

#[inline]
pub fn martingale_from_parts(z: Complex64, log_abs_deriv: f64, r: f64, a: f64) -> f64 {
    let y = z.im;
    let rr = z.re / y;
    let ln = lambda_of(r, a) * log_abs_deriv + (r - r * r / (4.0 * a)) * y.ln() + 0.5 * r * (rr * rr + 1.0).ln();
    ln.exp()
}

/// `M_0(z)`.
pub fn martingale_initial(z: Complex64, r: f64, a: f64) -> f64 {
    martingale_from_parts(z, 0.0, r, a)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McSpec {
    pub n_paths: usize,
    pub dt: f64,
    pub seed: u64,
    pub integrator: Integrator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConservationRow {
    pub t: f64,
    pub coarse: EnsembleStats,
    /// Same paths refined to `dt/2` by Brownian-bridge midpoints.
    pub fine: EnsembleStats,
    /// Refined again to `dt/4`.
    pub finest: EnsembleStats,
    /// Coupled correction `mean(M^{dt/2} - M^{dt})` and its standard error.
    pub correction: f64,
    pub correction_stderr: f64,
    /// Coupled correction `mean(M^{dt/4} - M^{dt/2})`.
    pub next_correction: f64,
    pub next_correction_stderr: f64,
    /// The second correction is no larger than the first, up to three
    /// standard errors of their coupled difference.
    pub bias_shrinks: bool,
    pub pass: bool,
}

/// Mean of `M_t` at each `t` on the `dt` grid and on two successive
/// Brownian-bridge refinements of the same paths. The Monte Carlo noise
/// cancels in the coupled corrections, so their contraction is observable
/// even when the bias itself is far below the sampling error.
pub fn martingale_conservation_test(r: f64, a: f64, z: Complex64, t_list: &[f64], mc: &McSpec) -> Result<Vec<ConservationRow>> {
    if !(z.im > 0.0) {
        return domain(format!("z must lie in the upper half-plane, got {z}"));
    }
    let t_max = t_list.iter().cloned().fold(0.0, f64::max);
    let target = martingale_initial(z, r, a);
    if t_max == 0.0 {
        return Ok(t_list
            .iter()
            .map(|&t| {
                let w = Welford::from_slice(&vec![target; mc.n_paths]);
                let s = EnsembleStats::new(&w, target, mc.dt);
                ConservationRow {
                    t,
                    coarse: s,
                    fine: s,
                    finest: s,
                    correction: 0.0,
                    correction_stderr: 0.0,
                    next_correction: 0.0,
                    next_correction_stderr: 0.0,
                    bias_shrinks: true,
                    pass: true,
                }
            })
            .collect());
    }
    let per_path = map_paths(mc.n_paths, |i| {
        let d0 = brownian_from_key(t_max, mc.dt, a, mc.seed, i).expect("valid grid");
        let d1 = d0.refine(mc.seed ^ i, BRIDGE_STREAM);
        let d2 = d1.refine(mc.seed ^ i, BRIDGE_STREAM + 1);
        let states: Vec<ReverseFlowState> =
            [d0, d1, d2].iter().map(|d| reverse_point(d, z, mc.integrator).expect("interior point")).collect();
        t_list
            .iter()
            .map(|&t| {
                let v: Vec<f64> = states.iter().map(|s| reverse_martingale_value(s, s.index_at(t), r, a)).collect();
                [v[0], v[1], v[2]]
            })
            .collect::<Vec<_>>()
    });
    Ok(t_list
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let mut w = [Welford::default(); 3];
            let (mut d1, mut d2) = (Welford::default(), Welford::default());
            for p in &per_path {
                let v = p[j];
                for l in 0..3 {
                    w[l].push(v[l]);
                }
                d1.push(v[1] - v[0]);
                d2.push(v[2] - v[1]);
            }
            let coarse = EnsembleStats::new(&w[0], target, mc.dt);
            let fine = EnsembleStats::new(&w[1], target, mc.dt / 2.0);
            let finest = EnsembleStats::new(&w[2], target, mc.dt / 4.0);
            // Path-level spread of the coupled corrections bounds the
            // uncertainty of |mean D2| - |mean D1|.
            let se = (d1.stderr().powi(2) + d2.stderr().powi(2)).sqrt();
            let se = if se.is_finite() { se } else { 0.0 };
            let bias_shrinks = d2.mean.abs() <= d1.mean.abs() + 3.0 * se;
            ConservationRow {
                t,
                coarse,
                fine,
                finest,
                correction: d1.mean,
                correction_stderr: d1.stderr(),
                next_correction: d2.mean,
                next_correction_stderr: d2.stderr(),
                bias_shrinks,
                pass: coarse.within(3.0) && bias_shrinks,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentScaling {
    pub lambda: f64,
    pub rows: Vec<(f64, EnsembleStats)>,
    /// Least-squares slope of `log E` against `log t`.
    pub fit: LineFit,
}

/// `E[|h_t'(i)|^lambda]` at each `t` from one set of paths up to `max t`.
pub fn derivative_moment_estimate(lambda: f64, a: f64, t_list: &[f64], mc: &McSpec) -> MomentScaling {
    let t_max = t_list.iter().cloned().fold(0.0, f64::max);
    let z = Complex64::new(0.0, 1.0);
    let per_path = map_paths(mc.n_paths, |i| {
        let d = brownian_from_key(t_max, mc.dt, a, mc.seed, i).expect("valid grid");
        let st = reverse_point(&d, z, mc.integrator).expect("interior point");
        t_list
            .iter()
            .map(|&t| (lambda * st.log_abs_deriv[st.index_at(t)]).exp())
            .collect::<Vec<_>>()
    });
    let rows: Vec<(f64, EnsembleStats)> = t_list
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let w = Welford::from_slice(&per_path.iter().map(|p| p[j]).collect::<Vec<_>>());
            (t, EnsembleStats::new(&w, f64::NAN, mc.dt))
        })
        .collect();
    let xs: Vec<f64> = rows.iter().map(|(t, _)| t.ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|(_, s)| s.mean.ln()).collect();
    let fit = if xs.len() >= 2 { ols(&xs, &ys) } else { LineFit { slope: 0.0, intercept: 0.0, stderr: 0.0, r2: 1.0 } };
    MomentScaling { lambda, rows, fit }
}

/// `N_t = M_t Y_t^{-theta} (R_t^2 + 1)^{delta/2}` with `M` the `r = 1`
/// martingale.
pub fn supermartingale_value(st: &ReverseFlowState, k: usize, theta: f64, delta: f64, a: f64) -> f64 {
    let z = st.z[k];
    let rr = z.re / z.im;
    reverse_martingale_value(st, k, 1.0, a) * (-theta * z.im.ln() + 0.5 * delta * (rr * rr + 1.0).ln()).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupermartingaleResult {
    pub stats: EnsembleStats,
    /// `mean <= N_0 + 3 stderr`.
    pub pass: bool,
}

pub fn supermartingale_check(theta: f64, delta: f64, a: f64, z: Complex64, t: f64, mc: &McSpec) -> Result<SupermartingaleResult> {
    if !supermartingale_admissible(theta, delta, a) {
        return domain(format!(
            "(theta, delta) = ({theta}, {delta}) violates 2a theta >= max(delta, delta - 4a delta + delta^2) at a = {a}"
        ));
    }
    if !(z.im > 0.0) {
        return domain(format!("z must lie in the upper half-plane, got {z}"));
    }
    let y = z.im;
    let rr = z.re / y;
    let n0 = martingale_initial(z, 1.0, a) * y.powf(-theta) * (rr * rr + 1.0).powf(delta / 2.0);
    let w = crate::ensemble::mean_over(mc.n_paths, |i| {
        if t == 0.0 {
            return n0;
        }
        let d = brownian_from_key(t, mc.dt, a, mc.seed, i).expect("valid grid");
        let st = reverse_point(&d, z, mc.integrator).expect("interior point");
        supermartingale_value(&st, st.len() - 1, theta, delta, a)
    });
    let stats = EnsembleStats::new(&w, n0, mc.dt);
    let slack = if stats.stderr.is_finite() { 3.0 * stats.stderr } else { 0.0 };
    Ok(SupermartingaleResult { pass: stats.mean <= n0 + slack, stats })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpperBoundTrend {
    pub r: f64,
    pub r_limit: f64,
    pub admissible: bool,
    /// `(s, E[|h'_{s^2}(x+i)|^lambda (R^2+1)^{r/2}] (s+1)^{r - r^2/(4a)})`.
    pub scaled: Vec<(f64, f64)>,
}

/// Fixed-time moment trend: the scaled moment should stay bounded in `s`.
pub fn upper_bound_trend(r: f64, a: f64, x: f64, s_list: &[f64], mc: &McSpec) -> UpperBoundTrend {
    let lam = lambda_of(r, a);
    let t_max = s_list.iter().map(|s| s * s).fold(0.0, f64::max);
    let z = Complex64::new(x, 1.0);
    let per_path = map_paths(mc.n_paths, |i| {
        let d = brownian_from_key(t_max, mc.dt, a, mc.seed, i).expect("valid grid");
        let st = reverse_point(&d, z, mc.integrator).expect("interior point");
        s_list
            .iter()
            .map(|&s| {
                let k = st.index_at(s * s);
                let zz = st.z[k];
                let rr = zz.re / zz.im;
                (lam * st.log_abs_deriv[k] + 0.5 * r * (rr * rr + 1.0).ln()).exp()
            })
            .collect::<Vec<_>>()
    });
    let scaled = s_list
        .iter()
        .enumerate()
        .map(|(j, &s)| {
            let m = per_path.iter().map(|p| p[j]).sum::<f64>() / per_path.len() as f64;
            (s, m * (s + 1.0).powf(r - r * r / (4.0 * a)))
        })
        .collect();
    let r_limit = upper_bound_r_limit(a).min(2.0 * a + 0.5);
    UpperBoundTrend { r, r_limit, admissible: (0.0..r_limit).contains(&r), scaled }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::sample_brownian_driver;
    use approx::assert_abs_diff_eq;

    fn mc(n: usize) -> McSpec {
        McSpec { n_paths: n, dt: 1e-2, seed: 1, integrator: Integrator::ExactSlit }
    }

    #[test]
    fn initial_values() {
        assert_abs_diff_eq!(martingale_initial(Complex64::new(0.0, 1.0), 1.0, 0.75), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(martingale_initial(Complex64::new(0.0, 2.0), 1.0, 0.5), 2f64.sqrt(), epsilon = 1e-14);
        // y^{r - r^2/(4a)} ((x/y)^2 + 1)^{r/2}
        let (x, y, r, a): (f64, f64, f64, f64) = (0.7, 1.3, 0.8, 0.6);
        let expect = y.powf(r - r * r / (4.0 * a)) * ((x / y) * (x / y) + 1.0).powf(r / 2.0);
        assert_abs_diff_eq!(martingale_initial(Complex64::new(x, y), r, a), expect, epsilon = 1e-14);
    }

    #[test]
    fn r_zero_is_constant() {
        let d = sample_brownian_driver(1.0, 1e-2, 0.75, 3).unwrap();
        let st = reverse_point(&d, Complex64::new(0.4, 0.9), Integrator::ExactSlit).unwrap();
        for k in 0..st.len() {
            assert_eq!(reverse_martingale_value(&st, k, 0.0, 0.75), 1.0);
        }
    }

    #[test]
    fn r_one_exponents() {
        let d = sample_brownian_driver(1.0, 1e-2, 0.75, 3).unwrap();
        let st = reverse_point(&d, Complex64::new(0.0, 1.0), Integrator::ExactSlit).unwrap();
        let k = 50;
        let z = st.z[k];
        let expect = st.abs_deriv(k).powf(4.0 / 3.0) * z.im.powf(2.0 / 3.0) * ((z.re / z.im).powi(2) + 1.0).sqrt();
        assert_abs_diff_eq!(reverse_martingale_value(&st, k, 1.0, 0.75), expect, epsilon = 1e-12);
    }

    #[test]
    fn time_zero_is_exact() {
        let rows = martingale_conservation_test(1.0, 0.75, Complex64::new(0.0, 1.0), &[0.0], &mc(10)).unwrap();
        assert_eq!(rows[0].coarse.mean, 1.0);
        assert!(rows[0].pass);
    }

    #[test]
    fn lambda_zero_moments() {
        let m = derivative_moment_estimate(0.0, 0.75, &[0.5, 1.0], &mc(5));
        assert!(m.rows.iter().all(|(_, s)| s.mean == 1.0));
        assert_abs_diff_eq!(m.fit.slope, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn supermartingale_reduces_to_martingale() {
        let res = supermartingale_check(0.0, 0.0, 0.75, Complex64::new(0.0, 1.0), 0.0, &mc(4)).unwrap();
        assert_eq!(res.stats.mean, 1.0);
        assert!(res.pass);
        assert!(supermartingale_check(0.1, 0.3, 0.5, Complex64::new(0.0, 1.0), 1.0, &mc(4)).is_err());
    }
}
