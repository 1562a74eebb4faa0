//! Partial-sum estimators on the uniform partition `k / n`.

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::driver::DrivingPath;
use crate::error::{domain, Result};
use crate::loewner::{build_chain, SlitChain, Trace};
use crate::table::write_table;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Candidate {
    Minkowski,
    ConformalMinkowski,
    DVariation,
    DerivativeSum,
}

/// `tau_n(t_k)` on the grid `t_k = k / n`, starting with `tau_n(0) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSeries {
    pub n: usize,
    pub candidate: Candidate,
    pub times: Vec<f64>,
    pub taus: Vec<f64>,
}

impl ParamSeries {
    pub fn is_nondecreasing(&self) -> bool {
        self.taus.first().is_none_or(|&t| t == 0.0) && self.taus.windows(2).all(|w| w[1] >= w[0])
    }

    /// `tau_n(t)` for `t` between grid points: the sum over `k <= t n`.
    pub fn at(&self, t: f64) -> f64 {
        let k = ((t * self.n as f64) + 1e-9).floor() as usize;
        self.taus[k.min(self.taus.len() - 1)]
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_table(out, &["t", "tau"], self.times.iter().zip(&self.taus).map(|(&t, &v)| vec![t, v]))
    }
}

/// Steps of width `dt` per `1/n`, if `1/n` is a multiple of `dt`.
pub(crate) fn stride(dt: f64, n: usize) -> Result<usize> {
    let m = 1.0 / (n as f64 * dt);
    let mr = m.round();
    if mr < 1.0 || (m - mr).abs() > 1e-6 * mr {
        return domain(format!("1/n = {} is not resolved by the driver grid dt = {dt}", 1.0 / n as f64));
    }
    Ok(mr as usize)
}

/// `tau_n(t) = sum_{k <= t n} n^{-d/2} |f_hat'_{k/n}(i / sqrt n)|^d`, where
/// `f_hat_t(w) = f_t(w + U_t)` is evaluated through the slit chain.
pub fn tau_derivative_sum(driver: &DrivingPath, n: usize, a: f64) -> Result<ParamSeries> {
    let m = stride(driver.dt, n)?;
    let chain = build_chain(driver);
    Ok(derivative_sum_on_chain(&chain, n, m, a))
}

/// [`tau_derivative_sum`] for several `n` on one chain.
pub fn tau_derivative_sum_multi(driver: &DrivingPath, ns: &[usize], a: f64) -> Result<Vec<ParamSeries>> {
    let strides: Result<Vec<usize>> = ns.iter().map(|&n| stride(driver.dt, n)).collect();
    let chain = build_chain(driver);
    Ok(ns.iter().zip(strides?).map(|(&n, m)| derivative_sum_on_chain(&chain, n, m, a)).collect())
}

pub(crate) fn derivative_sum_on_chain(chain: &SlitChain, n: usize, m: usize, a: f64) -> ParamSeries {
    use rayon::prelude::*;
    let d = 1.0 + 1.0 / (4.0 * a);
    let kmax = chain.len() / m;
    let y = 1.0 / (n as f64).sqrt();
    let scale = (n as f64).powf(-d / 2.0);
    let incs: Vec<f64> = (1..=kmax)
        .into_par_iter()
        .map(|k| {
            let s = k * m;
            let w = Complex64::new(chain.driver_at(s), y);
            let f = chain.inverse_at(s, w).expect("Im w > 0");
            scale * f.deriv.norm().powf(d)
        })
        .collect();
    let mut taus = Vec::with_capacity(kmax + 1);
    taus.push(0.0);
    let mut acc = 0.0;
    for v in incs {
        acc += v;
        taus.push(acc);
    }
    ParamSeries {
        n,
        candidate: super::Candidate::DerivativeSum,
        times: (0..=kmax).map(|k| k as f64 / n as f64).collect(),
        taus,
    }
}

/// `tau_n(t) = sum_{k <= t n} |gamma(k/n) - gamma((k-1)/n)|^d`.
pub fn tau_d_variation(trace: &Trace, n: usize, d: f64) -> Result<ParamSeries> {
    if trace.len() < 2 {
        return domain("trace needs at least two points");
    }
    let dt = trace.times[1] - trace.times[0];
    let m = stride(dt, n)?;
    let kmax = (trace.len() - 1) / m;
    let mut taus = vec![0.0];
    let mut acc = 0.0;
    for k in 1..=kmax {
        acc += (trace.points[k * m] - trace.points[(k - 1) * m]).norm().powf(d);
        taus.push(acc);
    }
    Ok(ParamSeries {
        n,
        candidate: Candidate::DVariation,
        times: (0..=kmax).map(|k| trace.times[0] + k as f64 / n as f64).collect(),
        taus,
    })
}
