//! Fractal dimension of traces: box counting, dyadic p-variation and a
//! Hölder exponent fit.

use std::collections::HashSet;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::loewner::Trace;
use crate::stats::ols;

/// Least-squares line through `(xs, ys)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub slope: f64,
    pub stderr: f64,
    pub r2: f64,
}

impl ScalingFit {
    pub fn fit(xs: Vec<f64>, ys: Vec<f64>) -> Self {
        let f = ols(&xs, &ys);
        ScalingFit { xs, ys, slope: f.slope, stderr: f.stderr, r2: f.r2 }
    }
}

/// Boxes of side `eps` met by the polyline through `points`. Segments are
/// walked in steps of `eps / 4`, so boxes clipped only at a corner can be
/// missed; the count is a lower bound off by a bounded factor.
pub fn box_count(points: &[Complex64], eps: f64) -> usize {
    let key = |p: Complex64| ((p.re / eps).floor() as i64, (p.im / eps).floor() as i64);
    let mut seen = HashSet::new();
    if let Some(&p) = points.first() {
        seen.insert(key(p));
    }
    for w in points.windows(2) {
        let len = (w[1] - w[0]).norm();
        let m = (4.0 * len / eps).ceil().max(1.0) as usize;
        for j in 1..=m {
            seen.insert(key(w[0] + (w[1] - w[0]) * (j as f64 / m as f64)));
        }
    }
    seen.len()
}

/// Slope of `log N(eps)` against `log(1/eps)`.
pub fn box_count_dimension(trace: &Trace, scales: &[f64]) -> Result<ScalingFit> {
    if scales.len() < 4 {
        return domain(format!("need at least 4 scales, got {}", scales.len()));
    }
    if scales.iter().any(|&s| !(s > 0.0)) {
        return domain("scales must be positive");
    }
    let lo = scales.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = scales.iter().cloned().fold(0.0, f64::max);
    if (hi / lo).log10() < 1.5 - 1e-9 {
        return domain(format!("scales span {:.2} decades, need 1.5", (hi / lo).log10()));
    }
    if trace.len() < 2 {
        return domain("trace needs at least two points");
    }
    let mut steps: Vec<f64> = trace.points.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
    steps.sort_by(f64::total_cmp);
    let median = steps[steps.len() / 2];
    if median > lo {
        return domain(format!("trace resolution {median:.3e} is coarser than the smallest scale {lo:.3e}"));
    }
    let counts: Vec<f64> = scales.par_iter().map(|&s| box_count(&trace.points, s) as f64).collect();
    let xs = scales.iter().map(|s| -s.ln()).collect();
    let ys = counts.iter().map(|c| c.ln()).collect();
    Ok(ScalingFit::fit(xs, ys))
}

/// `k` with `len - 1 = 2^k`.
fn dyadic_levels(trace: &Trace) -> Result<u32> {
    let n = trace.len().saturating_sub(1);
    if n < 2 || !n.is_power_of_two() {
        return domain(format!("trace must have 2^k + 1 points, got {}", trace.len()));
    }
    Ok(n.trailing_zeros())
}

/// Fitted slope of `log S_n(p)` in `log n`, where
/// `S_n(p) = sum_j |gamma(j/n) - gamma((j-1)/n)|^p` over dyadic `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationScan {
    pub levels: Vec<u32>,
    pub p_grid: Vec<f64>,
    pub slopes: Vec<f64>,
    pub estimate: Option<f64>,
}

/// Levels below this are too coarse to see anything but the diameter.
const MIN_LEVEL: u32 = 4;

pub fn variation_scan(trace: &Trace, p_grid: &[f64]) -> Result<VariationScan> {
    let k = dyadic_levels(trace)?;
    if k < MIN_LEVEL + 2 {
        return domain(format!("need at least 2^{} steps", MIN_LEVEL + 2));
    }
    let levels: Vec<u32> = (MIN_LEVEL..=k).collect();
    let incs: Vec<Vec<f64>> = levels
        .iter()
        .map(|&l| {
            let stride = 1usize << (k - l);
            (1..=(1usize << l)).map(|j| (trace.points[j * stride] - trace.points[(j - 1) * stride]).norm()).collect()
        })
        .collect();
    let xs: Vec<f64> = levels.iter().map(|&l| l as f64 * 2f64.ln()).collect();
    let slopes: Vec<f64> = p_grid
        .par_iter()
        .map(|&p| {
            let ys: Vec<f64> = incs.iter().map(|v| v.iter().map(|x| x.powf(p)).sum::<f64>().ln()).collect();
            ols(&xs, &ys).slope
        })
        .collect();
    let mut estimate = None;
    for i in 1..p_grid.len() {
        let (s0, s1) = (slopes[i - 1], slopes[i]);
        if s0 >= 0.0 && s1 < 0.0 {
            estimate = Some(p_grid[i - 1] + (p_grid[i] - p_grid[i - 1]) * s0 / (s0 - s1));
            break;
        }
    }
    Ok(VariationScan { levels, p_grid: p_grid.to_vec(), slopes, estimate })
}

/// `p` where the dyadic `p`-variation sums stop growing with `n`.
pub fn variation_dimension(trace: &Trace, p_grid: &[f64]) -> Result<f64> {
    let scan = variation_scan(trace, p_grid)?;
    match scan.estimate {
        Some(p) => Ok(p),
        None => domain("no sign change of the variation slope over the p grid"),
    }
}

/// `1, 1.05, ..., 3`.
pub fn default_p_grid() -> Vec<f64> {
    (0..=40).map(|i| 1.0 + 0.05 * i as f64).collect()
}

/// Slope of `log max_s |gamma(s + g) - gamma(s)|` against `log g` over gaps
/// `g = (T2 - T1) 2^{-j}`.
pub fn holder_report(trace: &Trace) -> Result<ScalingFit> {
    let n = trace.len().saturating_sub(1);
    if n < 8 {
        return domain("trace too short for a Hölder fit");
    }
    let span = trace.times[n] - trace.times[0];
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut gap = n / 2;
    while gap >= 1 && xs.len() < 12 {
        let sup = (0..=n - gap).map(|i| (trace.points[i + gap] - trace.points[i]).norm()).fold(0.0, f64::max);
        if sup > 0.0 {
            xs.push((span * gap as f64 / n as f64).ln());
            ys.push(sup.ln());
        }
        gap /= 2;
    }
    if xs.len() < 3 {
        return domain("trace has too few nonzero increments");
    }
    Ok(ScalingFit::fit(xs, ys))
}
