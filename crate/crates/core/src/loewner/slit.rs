//! Vertical-slit maps and their compositions.

use std::io::{Read, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::driver::{read_f64, read_u64, DrivingPath};
use crate::error::{domain, Error, Result};
use crate::invariants::{self, Invariant};

pub const TIP_LANES: usize = 8;

const CHAIN_MAGIC: &[u8; 7] = b"SLECHN1";

/// Square root in the closed upper half-plane. On the real axis the sign
/// follows `hint`, which keeps the map continuous from above. Uses the
/// half-angle formulas in real arithmetic; this sits in the innermost loop
/// of every chain composition.
#[inline]
pub fn upper_sqrt(z: Complex64, hint: f64) -> Complex64 {
    let (x, y) = (z.re, z.im);
    let r = (x * x + y * y).sqrt();
    if r == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let (re, im) = if x >= 0.0 {
        let t = (0.5 * (r + x)).sqrt();
        (t, y / (2.0 * t))
    } else {
        let t = (0.5 * (r - x)).sqrt();
        (y.abs() / (2.0 * t), t.copysign(y))
    };
    if im < 0.0 || (im == 0.0 && re * hint < 0.0) {
        Complex64::new(-re, -im)
    } else {
        Complex64::new(re, im)
    }
}

/// `z -> sqrt((z - du)^2 + c) + du`: removes a vertical slit of height
/// `sqrt(c)` at `du`, with half-plane capacity `c / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlitMap {
    pub du: f64,
    pub c: f64,
}

impl SlitMap {
    #[inline]
    pub fn forward(&self, z: Complex64) -> (Complex64, Complex64) {
        let zeta = z - self.du;
        let s = upper_sqrt(zeta * zeta + self.c, zeta.re);
        (s + self.du, zeta / s)
    }

    #[inline]
    pub fn inverse(&self, w: Complex64) -> (Complex64, Complex64) {
        let om = w - self.du;
        let s = upper_sqrt(om * om - self.c, om.re);
        (s + self.du, om / s)
    }

    #[inline]
    pub fn inverse_value(&self, w: Complex64) -> Complex64 {
        let om = w - self.du;
        upper_sqrt(om * om - self.c, om.re) + self.du
    }

    /// Image of the slit tip, `du + i sqrt(c)`.
    #[inline]
    pub fn tip(&self) -> Complex64 {
        Complex64::new(self.du, self.c.sqrt())
    }

    pub fn hcap(&self) -> f64 {
        self.c / 2.0
    }
}

/// Discrete Loewner chain: `g_{t_k} = phi_k o ... o phi_1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlitChain {
    pub dt: f64,
    pub a: f64,
    pub maps: Vec<SlitMap>,
}

/// Result of evaluating `f_t` with its derivative. `precision_lost` is set
/// when the composition passed so close to a slit base that the result is
/// dominated by rounding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapValue {
    pub value: Complex64,
    pub deriv: Complex64,
    pub precision_lost: bool,
}

/// One slit per step, step `k` (covering `[t_{k-1}, t_k]`) frozen at the
/// right endpoint `U_{t_k}`. With this choice `f_{t_k}(U_{t_k})` is exactly
/// the tip of the last slit pulled back through the earlier maps.
pub fn build_chain(driver: &DrivingPath) -> SlitChain {
    let c = 2.0 * driver.a * driver.dt;
    let maps: Vec<SlitMap> = driver.values[1..].iter().map(|&du| SlitMap { du, c }).collect();
    let chain = SlitChain { dt: driver.dt, a: driver.a, maps };
    let target = driver.a * driver.total_time();
    let bad = (chain.hcap() - target).abs() > 1e-12 * target.max(1.0);
    invariants::record(Invariant::HcapAdditive, 1, bad as u64);
    chain
}

impl SlitChain {
    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn total_time(&self) -> f64 {
        self.dt * self.len() as f64
    }

    /// Sum of elementary capacities.
    pub fn hcap(&self) -> f64 {
        self.maps.iter().map(SlitMap::hcap).sum()
    }

    /// `U_{t_k}`, with `U_0 = 0`.
    pub fn driver_at(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.maps[k - 1].du
        }
    }

    pub fn step_of(&self, t: f64) -> Result<usize> {
        let x = t / self.dt;
        let k = x.round();
        if k < 0.0 || k > self.len() as f64 || (x - k).abs() > 1e-9 * k.max(1.0) {
            return domain(format!("time {t} is not on the chain grid"));
        }
        Ok(k as usize)
    }

    /// `g_{t_k}(z)` and its derivative.
    pub fn forward(&self, k: usize, z: Complex64) -> (Complex64, Complex64) {
        let mut w = z;
        let mut d = Complex64::new(1.0, 0.0);
        for m in &self.maps[..k] {
            let (w1, d1) = m.forward(w);
            w = w1;
            d *= d1;
        }
        (w, d)
    }

    /// `f_{t_k}(w)` and its derivative, composing inverses from step `k` down.
    pub fn inverse_at(&self, k: usize, w: Complex64) -> Result<MapValue> {
        if w.im < 0.0 {
            return domain(format!("inverse_at needs Im w >= 0, got {w}"));
        }
        Ok(self.inverse_from(k, w, Complex64::new(1.0, 0.0)))
    }

    fn inverse_from(&self, k: usize, w: Complex64, d0: Complex64) -> MapValue {
        let mut w = w;
        let mut d = d0;
        let mut lost = false;
        for m in self.maps[..k].iter().rev() {
            let om = w - m.du;
            let q = om * om - m.c;
            // |om^2 - c| tiny relative to its terms: cancellation
            if q.norm_sqr() < 1e-26 * (om.norm_sqr() + m.c).powi(2) {
                lost = true;
            }
            let sq = upper_sqrt(q, om.re);
            w = sq + m.du;
            d *= om / sq;
        }
        MapValue { value: w, deriv: d, precision_lost: lost || !w.is_finite() }
    }

    /// `gamma(t_k) = f_{t_k}(U_{t_k})`, starting from the exact slit tip.
    pub fn tip(&self, k: usize) -> Complex64 {
        if k == 0 {
            return Complex64::new(0.0, 0.0);
        }
        let mut w = self.maps[k - 1].tip();
        for m in self.maps[..k - 1].iter().rev() {
            w = m.inverse_value(w);
        }
        w
    }

    /// `tip(k)` for `k` in `k0..k0 + LANES`. The shared part of the
    /// compositions runs over all lanes at once; the square roots of
    /// independent lanes overlap in the pipeline, which a single serial
    /// composition cannot do.
    pub fn tips_block(&self, k0: usize) -> [Complex64; TIP_LANES] {
        let mut ws = [Complex64::new(0.0, 0.0); TIP_LANES];
        let kmax = (k0 + TIP_LANES - 1).min(self.len());
        let base = k0.saturating_sub(1);
        for (j, w) in ws.iter_mut().enumerate() {
            let k = k0 + j;
            if k == 0 || k > kmax {
                continue;
            }
            *w = self.maps[k - 1].tip();
            for m in self.maps[base..k - 1].iter().rev() {
                *w = m.inverse_value(*w);
            }
        }
        for m in self.maps[..base].iter().rev() {
            for w in ws.iter_mut() {
                *w = m.inverse_value(*w);
            }
        }
        ws
    }

    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(CHAIN_MAGIC)?;
        out.write_all(&self.dt.to_le_bytes())?;
        out.write_all(&self.a.to_le_bytes())?;
        out.write_all(&(self.maps.len() as u64).to_le_bytes())?;
        for m in &self.maps {
            out.write_all(&m.du.to_le_bytes())?;
            out.write_all(&m.c.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 7];
        input.read_exact(&mut magic)?;
        if &magic != CHAIN_MAGIC {
            return Err(Error::Format { what: "chain binary", detail: "bad magic".into() });
        }
        let dt = read_f64(&mut input)?;
        let a = read_f64(&mut input)?;
        let n = read_u64(&mut input)? as usize;
        let mut maps = Vec::with_capacity(n);
        for _ in 0..n {
            let du = read_f64(&mut input)?;
            let c = read_f64(&mut input)?;
            maps.push(SlitMap { du, c });
        }
        Ok(SlitChain { dt, a, maps })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::{constant_driver, sample_brownian_driver};
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn tip_blocks_match_serial() {
        let d = sample_brownian_driver(1.0, 1.0 / 203.0, 0.75, 4).unwrap();
        let ch = build_chain(&d);
        for k0 in (0..=ch.len()).step_by(TIP_LANES) {
            let b = ch.tips_block(k0);
            for (j, w) in b.iter().enumerate() {
                if k0 + j <= ch.len() {
                    assert_eq!(*w, ch.tip(k0 + j));
                }
            }
        }
    }

    #[test]
    fn single_zero_map() {
        let d = constant_driver(1.0, 1.0, 0.5, 0.0).unwrap();
        let ch = build_chain(&d);
        assert_eq!(ch.maps, vec![SlitMap { du: 0.0, c: 1.0 }]);
        let (g, _) = ch.forward(1, c(0.0, 2.0));
        assert!((g - c(0.0, 3f64.sqrt())).norm() < 1e-15);
    }

    #[test]
    fn zero_chain_is_exact() {
        let a = 0.5;
        let d = constant_driver(1.0, 1e-3, a, 0.0).unwrap();
        let ch = build_chain(&d);
        for &z in &[c(0.3, 1.0), c(-2.0, 0.5), c(0.0, 3.0)] {
            let (g, dg) = ch.forward(1000, z);
            let exact = upper_sqrt(z * z + 2.0 * a, z.re);
            assert!((g - exact).norm() < 1e-9, "{g} vs {exact}");
            assert!((dg - z / exact).norm() < 1e-9);
        }
        let w = c(0.4, 5.0);
        let f = ch.inverse_at(1000, w).unwrap();
        let exact = upper_sqrt(w * w - 2.0 * a, w.re);
        assert!((f.value - exact).norm() < 1e-9);
        for k in [1, 10, 500, 1000] {
            let t = k as f64 * 1e-3;
            assert!((ch.tip(k) - c(0.0, (2.0 * a * t).sqrt())).norm() < 1e-9);
        }
    }

    #[test]
    fn hcap_additive() {
        let d = sample_brownian_driver(1.0, 1e-3, 0.75, 1).unwrap();
        let ch = build_chain(&d);
        assert!((ch.hcap() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn round_trip_interior() {
        let d = sample_brownian_driver(1.0, 1e-3, 0.75, 11).unwrap();
        let ch = build_chain(&d);
        for &z in &[c(0.0, 1.0), c(1.5, 0.7), c(-0.8, 2.0)] {
            let (g, dg) = ch.forward(1000, z);
            let f = ch.inverse_at(1000, g).unwrap();
            assert!((f.value - z).norm() < 1e-8, "{} vs {z}", f.value);
            assert!((f.deriv * dg - 1.0).norm() < 1e-8);
        }
    }

    #[test]
    fn inverse_rejects_lower_half_plane() {
        let d = constant_driver(1.0, 0.5, 0.5, 0.0).unwrap();
        assert!(build_chain(&d).inverse_at(2, c(0.0, -1.0)).is_err());
    }

    #[test]
    fn binary_round_trip() {
        let d = sample_brownian_driver(1.0, 0.1, 0.75, 2).unwrap();
        let ch = build_chain(&d);
        let mut buf = Vec::new();
        ch.write_binary(&mut buf).unwrap();
        assert_eq!(&buf[..7], b"SLECHN1");
        assert_eq!(SlitChain::read_binary(&buf[..]).unwrap(), ch);
    }

    proptest! {
        #[test]
        fn upper_sqrt_matches_library(x in -1e3f64..1e3, y in -1e3f64..1e3, hint in -1.0f64..1.0) {
            let z = c(x, y);
            let mut lib = z.sqrt();
            if lib.im < 0.0 || (lib.im == 0.0 && lib.re * hint < 0.0) {
                lib = -lib;
            }
            let s = upper_sqrt(z, hint);
            prop_assert!((s - lib).norm() <= 1e-14 * lib.norm().max(1e-300));
            prop_assert!(s.im >= 0.0);
        }

        #[test]
        fn slit_round_trip(du in -3.0f64..3.0, cc in 1e-4f64..2.0, x in -4.0f64..4.0, y in 1e-3f64..4.0) {
            let m = SlitMap { du, c: cc };
            let z = c(x, y);
            let (w, d) = m.forward(z);
            prop_assert!(w.im > 0.0);
            let (back, db) = m.inverse(w);
            prop_assert!((back - z).norm() < 1e-9 * (1.0 + z.norm()));
            prop_assert!((d * db - 1.0).norm() < 1e-8);
        }

        #[test]
        fn forward_maps_real_axis_to_real_axis(du in -3.0f64..3.0, x in -10.0f64..10.0) {
            let m = SlitMap { du, c: 0.5 };
            let (w, _) = m.forward(c(x, 0.0));
            prop_assert!(w.im.abs() < 1e-12);
            prop_assert!((w.re - du).signum() == (x - du).signum() || x == du);
        }
    }
}
