//! Neighborhood areas of the trace: plain Euclidean and the conformal
//! version through `Upsilon_t`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::loewner::{forward_point_until, SlitChain, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl BBox {
    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    /// Smallest box holding `points` grown by `margin` on every side.
    pub fn around(points: &[Complex64], margin: f64) -> BBox {
        let mut b = BBox { x0: f64::INFINITY, x1: f64::NEG_INFINITY, y0: f64::INFINITY, y1: f64::NEG_INFINITY };
        for p in points {
            b.x0 = b.x0.min(p.re);
            b.x1 = b.x1.max(p.re);
            b.y0 = b.y0.min(p.im);
            b.y1 = b.y1.max(p.im);
        }
        BBox { x0: b.x0 - margin, x1: b.x1 + margin, y0: b.y0 - margin, y1: b.y1 + margin }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinkowskiOptions {
    pub grid_h: f64,
    /// Count only pixels with positive imaginary part.
    pub upper_half_only: bool,
}

fn seg_dist2(p: Complex64, a: Complex64, b: Complex64) -> f64 {
    let ab = b - a;
    let l2 = ab.norm_sqr();
    let s = if l2 > 0.0 { (((p - a) * ab.conj()).re / l2).clamp(0.0, 1.0) } else { 0.0 };
    (p - a - ab * s).norm_sqr()
}

/// `eps^{d-2}` times the area of `{z : dist(z, trace) <= eps}`, counting
/// pixel centers of side `grid_h` over `bbox`. The trace is read as the
/// polyline through its points; each segment marks the pixels inside its
/// capsule on a bitmap, so a pixel is counted once however many segments
/// come near it.
pub fn tau_minkowski(trace: &Trace, eps: f64, d: f64, bbox: BBox, opts: MinkowskiOptions) -> Result<f64> {
    if !(eps > 0.0) {
        return domain(format!("eps must be positive, got {eps}"));
    }
    let h = opts.grid_h;
    if !(h > 0.0) || h > eps / 4.0 * (1.0 + 1e-12) {
        return domain(format!("grid_h must lie in (0, eps/4], got {h} for eps = {eps}"));
    }
    if trace.is_empty() {
        return Ok(0.0);
    }
    let need = BBox::around(&trace.points, eps);
    if need.x0 < bbox.x0 || need.x1 > bbox.x1 || need.y0 < bbox.y0 || need.y1 > bbox.y1 {
        return domain("bbox does not contain the eps-neighborhood of the trace");
    }
    let nx = (bbox.width() / h).ceil() as usize;
    let ny = (bbox.height() / h).ceil() as usize;
    let mut bits = vec![0u64; (nx * ny).div_ceil(64)];
    let e2 = eps * eps;
    let mut mark = |a: Complex64, b: Complex64| {
        let lo_x = ((a.re.min(b.re) - eps - bbox.x0) / h - 0.5).floor().max(0.0) as usize;
        let hi_x = (((a.re.max(b.re) + eps - bbox.x0) / h - 0.5).ceil() as usize).min(nx - 1);
        let lo_y = ((a.im.min(b.im) - eps - bbox.y0) / h - 0.5).floor().max(0.0) as usize;
        let hi_y = (((a.im.max(b.im) + eps - bbox.y0) / h - 0.5).ceil() as usize).min(ny - 1);
        for j in lo_y..=hi_y {
            let y = bbox.y0 + (j as f64 + 0.5) * h;
            if opts.upper_half_only && y <= 0.0 {
                continue;
            }
            for i in lo_x..=hi_x {
                let idx = j * nx + i;
                if bits[idx / 64] >> (idx % 64) & 1 == 1 {
                    continue;
                }
                let p = Complex64::new(bbox.x0 + (i as f64 + 0.5) * h, y);
                if seg_dist2(p, a, b) <= e2 {
                    bits[idx / 64] |= 1 << (idx % 64);
                }
            }
        }
    };
    if trace.len() == 1 {
        mark(trace.points[0], trace.points[0]);
    }
    for w in trace.points.windows(2) {
        mark(w[0], w[1]);
    }
    let count: u64 = bits.iter().map(|b| b.count_ones() as u64).sum();
    Ok(eps.powf(d - 2.0) * count as f64 * h * h)
}

/// Node centers of an `h`-grid over the part of `bbox` above the real line.
pub fn upper_nodes(bbox: BBox, h: f64) -> Vec<Complex64> {
    let nx = (bbox.width() / h).round() as usize;
    let y_lo = bbox.y0.max(0.0);
    let ny = ((bbox.y1 - y_lo) / h).round() as usize;
    let mut out = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            out.push(Complex64::new(bbox.x0 + (i as f64 + 0.5) * h, y_lo + (j as f64 + 0.5) * h));
        }
    }
    out
}

/// `Upsilon_t(z)` at step `k`; absorbed points keep their last value.
fn upsilon_at(chain: &SlitChain, k: usize, z: Complex64) -> Result<f64> {
    let st = forward_point_until(chain, z, k)?;
    Ok(st.upsilon_at_index(st.len() - 1))
}

/// `eps^{d-2}` times the area of `{z in grid : Upsilon_t(z) <= eps}`,
/// each node standing for an `h x h` cell.
pub fn tau_conformal_minkowski(chain: &SlitChain, nodes: &[Complex64], h: f64, eps: f64, t: f64, d: f64) -> Result<f64> {
    if !(eps > 0.0) || !(h > 0.0) {
        return domain("eps and h must be positive");
    }
    let k = chain.step_of(t)?;
    let hits: Result<Vec<bool>> = nodes.par_iter().map(|&z| Ok(upsilon_at(chain, k, z)? <= eps)).collect();
    let count = hits?.into_iter().filter(|&b| b).count();
    Ok(eps.powf(d - 2.0) * count as f64 * h * h)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparability {
    pub z: Complex64,
    pub upsilon: f64,
    pub dist: f64,
    pub ratio: f64,
}

/// `Upsilon_t(z)` against the distance from `z` to the trace polyline up to
/// `t` together with the real line.
pub fn upsilon_comparability(chain: &SlitChain, trace: &Trace, nodes: &[Complex64], t: f64) -> Result<Vec<Comparability>> {
    let k = chain.step_of(t)?;
    let pts = &trace.window(0.0, t).points;
    nodes
        .par_iter()
        .map(|&z| {
            let ups = upsilon_at(chain, k, z)?;
            let mut d2 = z.im * z.im;
            for w in pts.windows(2) {
                d2 = d2.min(seg_dist2(z, w[0], w[1]));
            }
            let dist = d2.sqrt();
            Ok(Comparability { z, upsilon: ups, dist, ratio: ups / dist })
        })
        .collect()
}
