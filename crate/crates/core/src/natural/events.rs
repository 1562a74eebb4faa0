//! Regularity events for the reverse flow from `i / sqrt(n)` and the
//! weights built on them.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::loewner::ReverseFlowState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phi0 {
    pub c: f64,
    pub u: f64,
}

impl Default for Phi0 {
    fn default() -> Self {
        Phi0 { c: 10.0, u: 1.0 }
    }
}

/// `C exp{ [log(x+1)]^{1/2} [log log(x+2)]^u }`. The inner `log log` is
/// negative for `x < e - 2`; it is clamped at zero there so the function
/// stays defined and nondecreasing.
pub fn phi0(p: Phi0, x: f64) -> f64 {
    let ll = (x + 2.0).ln().ln().max(0.0);
    p.c * ((x + 1.0).ln().sqrt() * ll.powf(p.u)).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoodEventReport {
    pub events: [bool; 6],
    pub phi0: Phi0,
    pub overall: bool,
}

/// The six events on the grid times of `[1/n, S]`, where `S` is the last
/// time of `state`:
/// 1. `Y_t >= t^{1/2} / phi0(1/t)`
/// 2. `Y_t >= t^{1/2} / phi0(nt)`
/// 3. `|X_t| <= t^{1/2} phi0(1/t)`
/// 4. `|X_t| <= t^{1/2} phi0(nt)`
/// 5. `(nt)^beta / phi0(nt) <= |h_t'| <= (nt)^beta phi0(nt)`
/// 6. `t^{-beta} / phi0(1/t) <= |h_S' / h_t'| <= t^{-beta} phi0(1/t)`
pub fn good_event_indicator(state: &ReverseFlowState, n: usize, p: Phi0, a: f64) -> Result<GoodEventReport> {
    let start = Complex64::new(0.0, 1.0 / (n as f64).sqrt());
    if (state.z0 - start).norm() > 1e-12 * start.im {
        return domain(format!("state must start at i/sqrt(n) = {start}, got {}", state.z0));
    }
    let beta = (1.0 - 2.0 * a) / (4.0 * a);
    let nf = n as f64;
    let last = state.len() - 1;
    let log_end = state.log_abs_deriv[last];
    let mut ev = [true; 6];
    for k in 0..state.len() {
        let t = state.times[k];
        if t < 1.0 / nf - 1e-12 {
            continue;
        }
        let z = state.z[k];
        let sq = t.sqrt();
        let p_inv = phi0(p, 1.0 / t);
        let p_n = phi0(p, nf * t);
        ev[0] &= z.im >= sq / p_inv;
        ev[1] &= z.im >= sq / p_n;
        ev[2] &= z.re.abs() <= sq * p_inv;
        ev[3] &= z.re.abs() <= sq * p_n;
        let ld = state.log_abs_deriv[k];
        let c5 = beta * (nf * t).ln();
        ev[4] &= (ld - c5).abs() <= p_n.ln();
        let c6 = -beta * t.ln();
        ev[5] &= (log_end - ld - c6).abs() <= p_inv.ln();
    }
    Ok(GoodEventReport { events: ev, phi0: p, overall: ev.iter().all(|&e| e) })
}

/// `F = n^{1 - d/2} |h_S'(i/sqrt n)|^d 1_E`, with `S` the last time of the
/// state. The reverse-flow derivative at `S` equals `f_hat_S'` of the
/// reversed driver.
pub fn frostman_weight(state: &ReverseFlowState, n: usize, a: f64, event: &GoodEventReport) -> f64 {
    if !event.overall {
        return 0.0;
    }
    let d = 1.0 + 1.0 / (4.0 * a);
    let last = state.len() - 1;
    (n as f64).powf(1.0 - d / 2.0) * (d * state.log_abs_deriv[last]).exp()
}
