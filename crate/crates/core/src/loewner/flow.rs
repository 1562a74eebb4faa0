//! Marked-point tracking under the forward chain and the reverse flow.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::slit::{upper_sqrt, SlitChain};
use crate::driver::DrivingPath;
use crate::error::{domain, Result};
use crate::invariants::{self, Invariant, SLACK};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlowDirection {
    Forward,
    Reverse,
}

/// `Z_t = X_t + i Y_t` (the marked point minus the driver) and
/// `log |h_t'(z)|` or `log |g_t'(z)|` on the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReverseFlowState {
    pub direction: FlowDirection,
    pub a: f64,
    pub z0: Complex64,
    pub times: Vec<f64>,
    pub z: Vec<Complex64>,
    pub log_abs_deriv: Vec<f64>,
    /// Forward flow only: time at which the point was absorbed. The series
    /// stops there and `Upsilon` keeps its last value afterwards.
    pub swallowed_at: Option<f64>,
}

impl ReverseFlowState {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn y(&self, k: usize) -> f64 {
        self.z[k].im
    }

    pub fn abs_deriv(&self, k: usize) -> f64 {
        self.log_abs_deriv[k].exp()
    }

    /// `Psi_t = |h_t'(z)| / Y_t`.
    pub fn psi(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.abs_deriv(k) / self.y(k)).collect()
    }

    /// `Upsilon_t = Y_t / |g_t'(z)|`.
    pub fn upsilon(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.upsilon_at_index(k)).collect()
    }

    pub fn upsilon_at_index(&self, k: usize) -> f64 {
        (self.z[k].im.ln() - self.log_abs_deriv[k]).exp()
    }

    /// Index of the last stored sample at or before `t`.
    pub fn index_at(&self, t: f64) -> usize {
        let dt = if self.len() > 1 { self.times[1] - self.times[0] } else { 1.0 };
        (((t / dt) + 1e-9).floor() as usize).min(self.len() - 1)
    }
}

/// Follows `z` under `g_t`, recording `g_t(z) - U_t` and `log |g_t'(z)|`.
pub fn forward_point(chain: &SlitChain, z: Complex64) -> Result<ReverseFlowState> {
    forward_point_until(chain, z, chain.len())
}

/// As [`forward_point`], stopping after `steps` maps.
pub fn forward_point_until(chain: &SlitChain, z: Complex64, steps: usize) -> Result<ReverseFlowState> {
    if !(z.im > 0.0) {
        return domain(format!("marked point must lie in the upper half-plane, got {z}"));
    }
    let steps = steps.min(chain.len());
    let mut st = ReverseFlowState {
        direction: FlowDirection::Forward,
        a: chain.a,
        z0: z,
        times: Vec::with_capacity(steps + 1),
        z: Vec::with_capacity(steps + 1),
        log_abs_deriv: Vec::with_capacity(steps + 1),
        swallowed_at: None,
    };
    st.times.push(0.0);
    st.z.push(z);
    st.log_abs_deriv.push(0.0);
    let mut w = z;
    let mut logd = 0.0;
    let mut log_ups = z.im.ln();
    let mut violations = 0;
    for (k, m) in chain.maps[..steps].iter().enumerate() {
        let (w1, d1) = m.forward(w);
        let nd = d1.norm();
        if !(w1.im > 1e-12) || !(nd > 0.0) || !nd.is_finite() {
            st.swallowed_at = Some(chain.dt * (k + 1) as f64);
            break;
        }
        w = w1;
        logd += nd.ln();
        let lu = w.im.ln() - logd;
        if lu > log_ups + SLACK {
            violations += 1;
        }
        log_ups = lu;
        st.times.push(chain.dt * (k + 1) as f64);
        st.z.push(w - m.du);
        st.log_abs_deriv.push(logd);
    }
    invariants::record(Invariant::UpsilonMonotone, st.len() as u64 - 1, violations);
    Ok(st)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Integrator {
    /// Explicit midpoint rule with step doubling.
    Midpoint { tol: f64, richardson: bool },
    /// Closed-form solution for the frozen driver; agrees with the slit chain.
    ExactSlit,
}

impl Default for Integrator {
    fn default() -> Self {
        Integrator::Midpoint { tol: 1e-8, richardson: false }
    }
}

/// Reverse flow `dh/dt = a / (U_t - h)` started at `z`.
///
/// On `[t_k, t_{k+1}]` the driver is frozen at `U_{t_k}`, so
/// `Z = h - U_{t_k}` solves `dZ/dt = -a/Z` and `d log h'/dt = a/Z^2`; at the
/// step end `Z` absorbs the driver increment. Run on the reversal of a
/// driver `V`, this reproduces the slit chain of `V` exactly.
pub fn reverse_point(driver: &DrivingPath, z: Complex64, integ: Integrator) -> Result<ReverseFlowState> {
    reverse_point_until(driver, z, integ, driver.steps())
}

pub fn reverse_point_until(
    driver: &DrivingPath,
    z: Complex64,
    integ: Integrator,
    steps: usize,
) -> Result<ReverseFlowState> {
    if !(z.im > 0.0) {
        return domain(format!("marked point must lie in the upper half-plane, got {z}"));
    }
    let steps = steps.min(driver.steps());
    let a = driver.a;
    let dt = driver.dt;
    let mut st = ReverseFlowState {
        direction: FlowDirection::Reverse,
        a,
        z0: z,
        times: Vec::with_capacity(steps + 1),
        z: Vec::with_capacity(steps + 1),
        log_abs_deriv: Vec::with_capacity(steps + 1),
        swallowed_at: None,
    };
    st.times.push(0.0);
    st.z.push(z);
    st.log_abs_deriv.push(0.0);
    let mut zz = z;
    let mut logd = 0.0;
    let mut h_step = dt;
    for k in 0..steps {
        let (z1, dl) = match integ {
            Integrator::ExactSlit => exact_step(zz, a, dt),
            Integrator::Midpoint { tol, richardson } => midpoint_step(zz, a, dt, tol, richardson, &mut h_step),
        };
        logd += dl;
        zz = z1 - (driver.values[k + 1] - driver.values[k]);
        st.times.push(dt * (k + 1) as f64);
        st.z.push(zz);
        st.log_abs_deriv.push(logd);
    }
    check_reverse(&st);
    Ok(st)
}

/// `Z^2` decreases linearly by `2 a dt`; `h'` picks up the factor `Z_0 / Z_1`.
/// Returns the new `Z` and the increment of `log |h'|`.
#[inline]
fn exact_step(z: Complex64, a: f64, dt: f64) -> (Complex64, f64) {
    let z1 = upper_sqrt(z * z - 2.0 * a * dt, z.re);
    (z1, 0.5 * (z.norm_sqr() / z1.norm_sqr()).ln())
}

#[inline]
fn rhs(z: Complex64, a: f64) -> (Complex64, Complex64) {
    let inv = 1.0 / z;
    (-a * inv, a * inv * inv)
}

#[inline]
fn midpoint(z: Complex64, l: Complex64, a: f64, h: f64) -> (Complex64, Complex64) {
    let (fz, _) = rhs(z, a);
    let zm = z + 0.5 * h * fz;
    let (gz, gl) = rhs(zm, a);
    (z + h * gz, l + h * gl)
}

/// Integrates one frozen step of length `dt`. `h_try` carries the last
/// accepted substep between calls.
fn midpoint_step(
    z0: Complex64,
    a: f64,
    dt: f64,
    tol: f64,
    richardson: bool,
    h_try: &mut f64,
) -> (Complex64, f64) {
    let mut t = 0.0;
    let mut z = z0;
    let mut l = Complex64::new(0.0, 0.0);
    let mut h = h_try.min(dt);
    while t < dt {
        let last = t + h >= dt * (1.0 - 1e-12);
        if last {
            h = dt - t;
        }
        let (z_full, l_full) = midpoint(z, l, a, h);
        let (zh, lh) = midpoint(z, l, a, 0.5 * h);
        let (z_half, l_half) = midpoint(zh, lh, a, 0.5 * h);
        let err = ((z_half - z_full).norm() + (l_half - l_full).norm()) / 3.0;
        let scale = 1.0f64.max(z.norm());
        if err <= tol * scale || h < 1e-14 * dt.max(1e-300) {
            if richardson {
                z = z_half + (z_half - z_full) / 3.0;
                l = l_half + (l_half - l_full) / 3.0;
            } else {
                z = z_half;
                l = l_half;
            }
            t += h;
            if !last {
                *h_try = h;
            }
            if err < 0.1 * tol * scale {
                h *= 2.0;
                *h_try = h.min(dt);
            }
            if last {
                break;
            }
        } else {
            h *= 0.5;
        }
    }
    (z, l.re)
}

/// Records the reverse-flow bounds for a completed path.
fn check_reverse(st: &ReverseFlowState) {
    let y0 = st.z0.im;
    let a = st.a;
    let n = st.len() as u64 - 1;
    let (mut vy, mut vb, mut vpsi, mut vd) = (0, 0, 0, 0);
    let mut prev_y = y0;
    let mut prev_psi = 1.0 / y0;
    for k in 1..st.len() {
        let t = st.times[k];
        let y = st.y(k);
        let hd = st.abs_deriv(k);
        if y < prev_y * (1.0 - SLACK) {
            vy += 1;
        }
        if y * y > (2.0 * a * t + y0 * y0) * (1.0 + SLACK) {
            vb += 1;
        }
        let psi = hd / y;
        if psi > prev_psi * (1.0 + SLACK) {
            vpsi += 1;
        }
        if hd > (2.0 * a * t / (y0 * y0) + 1.0).sqrt() * (1.0 + SLACK) {
            vd += 1;
        }
        prev_y = y;
        prev_psi = psi;
    }
    invariants::record(Invariant::ReverseYMonotone, n, vy);
    invariants::record(Invariant::ReverseYBound, n, vb);
    invariants::record(Invariant::PsiMonotone, n, vpsi);
    invariants::record(Invariant::DerivativeBound, n, vd);
}
