//! Trace extraction and the accessibility bound `v(t, y)`.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::slit::{build_chain, SlitChain, TIP_LANES};
use crate::driver::DrivingPath;
use crate::error::Result;
use crate::quadrature::GaussLegendre;
use crate::table::write_table;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub times: Vec<f64>,
    pub points: Vec<Complex64>,
    pub y0: f64,
    /// `v(t_k, y0)` when `y0 > 0`.
    pub error_bound: Option<Vec<f64>>,
}

impl Trace {
    pub fn from_points(times: Vec<f64>, points: Vec<Complex64>) -> Self {
        Trace { times, points, y0: 0.0, error_bound: None }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points with `t_lo <= t <= t_hi`.
    pub fn window(&self, t_lo: f64, t_hi: f64) -> Trace {
        let idx: Vec<usize> = (0..self.len())
            .filter(|&k| self.times[k] >= t_lo - 1e-12 && self.times[k] <= t_hi + 1e-12)
            .collect();
        Trace {
            times: idx.iter().map(|&k| self.times[k]).collect(),
            points: idx.iter().map(|&k| self.points[k]).collect(),
            y0: self.y0,
            error_bound: self.error_bound.as_ref().map(|e| idx.iter().map(|&k| e[k]).collect()),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_table(
            out,
            &["t", "re", "im", "vbound"],
            (0..self.len()).map(|k| {
                let v = self.error_bound.as_ref().map_or(0.0, |e| e[k]);
                vec![self.times[k], self.points[k].re, self.points[k].im, v]
            }),
        )
    }
}

/// `gamma(t_k)` for every grid time. With `y0 = 0` the tips are composed
/// exactly; otherwise the points are `f_{t_k}(U_{t_k} + i y0)` together with
/// the bound `v(t_k, y0)` on their distance to the tip.
pub fn trace(driver: &DrivingPath, y0: f64) -> Trace {
    let chain = build_chain(driver);
    trace_of_chain(&chain, y0)
}

pub fn trace_of_chain(chain: &SlitChain, y0: f64) -> Trace {
    let n = chain.len();
    let times: Vec<f64> = (0..=n).map(|k| chain.dt * k as f64).collect();
    if y0 <= 0.0 {
        let blocks: Vec<_> = (0..=n).step_by(TIP_LANES).collect();
        let mut points: Vec<Complex64> = blocks.into_par_iter().flat_map_iter(|k0| chain.tips_block(k0)).collect();
        points.truncate(n + 1);
        return Trace { times, points, y0: 0.0, error_bound: None };
    }
    let gl = GaussLegendre::new(8);
    let (points, bounds): (Vec<_>, Vec<_>) = (0..=n)
        .into_par_iter()
        .map(|k| {
            let w = Complex64::new(chain.driver_at(k), y0);
            let p = chain.inverse_from_top(k, w);
            (p, tip_error_bound_with(chain, k, y0, &gl))
        })
        .unzip();
    Trace { times, points, y0, error_bound: Some(bounds) }
}

impl SlitChain {
    fn inverse_from_top(&self, k: usize, w: Complex64) -> Complex64 {
        // Im w > 0 here, so the domain check cannot fail.
        self.inverse_at(k, w).map(|v| v.value).unwrap_or(Complex64::new(f64::NAN, f64::NAN))
    }
}

/// Integrand values above this are treated as divergence.
const DERIVATIVE_CAP: f64 = 1e12;

/// `v(t_k, y) = int_0^y |f_{t_k}'(U_{t_k} + i r)| dr` with `r = y s^4` and a
/// composite Gauss rule in `s`, which absorbs inverse-power growth at `r = 0`.
/// Returns infinity when the integrand exceeds the cap or is not finite.
pub fn tip_error_bound(chain: &SlitChain, k: usize, y: f64) -> f64 {
    tip_error_bound_with(chain, k, y, &GaussLegendre::new(8))
}

fn tip_error_bound_with(chain: &SlitChain, k: usize, y: f64, gl: &GaussLegendre) -> f64 {
    let u = chain.driver_at(k);
    let mut diverged = false;
    let v = gl.composite(0.0, 1.0, 8, |s| {
        let r = y * s.powi(4);
        if r <= 0.0 {
            return 0.0;
        }
        let m = chain.inverse_at(k, Complex64::new(u, r)).expect("r > 0");
        let d = m.deriv.norm();
        if !d.is_finite() || d > DERIVATIVE_CAP {
            diverged = true;
        }
        d * 4.0 * y * s.powi(3)
    });
    if diverged || !v.is_finite() {
        f64::INFINITY
    } else {
        v
    }
}
