//! `alpha`-energy of measures made of uniform disks.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::driver::DrivingPath;
use crate::error::{domain, Result};
use crate::loewner::{build_chain, reverse_point, Integrator};
use crate::quadrature::GaussLegendre;

use super::events::{frostman_weight, good_event_indicator, Phi0};
use super::series::stride;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    pub atoms: Vec<(Complex64, f64)>,
    /// Each atom is spread uniformly over a disk of this radius.
    pub smear_radius: f64,
}

impl EmpiricalMeasure {
    pub fn new(atoms: Vec<(Complex64, f64)>, smear_radius: f64) -> Result<Self> {
        if !(smear_radius > 0.0) {
            return domain(format!("smear radius must be positive, got {smear_radius}"));
        }
        if atoms.iter().any(|&(_, m)| !(m >= 0.0)) {
            return domain("atom masses must be nonnegative");
        }
        Ok(EmpiricalMeasure { atoms, smear_radius })
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrostmanEnergy {
    pub value: f64,
    /// Set for `alpha >= 2`, where disk self-energies are infinite.
    pub divergent_risk: bool,
}

/// Area of the intersection of two disks of radius `r` at distance `s`.
pub fn lens_area(r: f64, s: f64) -> f64 {
    if s >= 2.0 * r {
        return 0.0;
    }
    2.0 * r * r * (s / (2.0 * r)).acos() - 0.5 * s * (4.0 * r * r - s * s).sqrt()
}

/// `E|X - Y|^{-alpha}` for `X`, `Y` uniform on disks of radius `r` whose
/// centers are `s` apart. `X - Y` has density `lens_area(r, |w|) / (pi r^2)^2`
/// on `|w| <= 2r`, shifted by the center offset. When the singular point
/// lies inside that support the integral is taken in polar coordinates about
/// it, out to the support boundary along each ray, with
/// `rho = rho_max u^{1/(2 - alpha)}` absorbing the `rho^{1-alpha}` weight.
/// Otherwise polar coordinates about the support center are used.
pub fn disk_pair_kernel(r: f64, s: f64, alpha: f64, gl: &GaussLegendre) -> f64 {
    let norm = 1.0 / (PI * r * r).powi(2);
    let r2 = 2.0 * r;
    let mut total = 0.0;
    // phi over [0, pi], doubled by symmetry
    for (pp, wp) in gl.nodes.iter().zip(&gl.weights) {
        let phi = 0.5 * PI * (pp + 1.0);
        let (sn, cs) = phi.sin_cos();
        let mut inner = 0.0;
        if s < r2 {
            let p = 2.0 - alpha;
            let rho_max = s * cs + (r2 * r2 - s * s * sn * sn).sqrt();
            let jac = rho_max.powf(p) / p;
            for (pu, wu) in gl.nodes.iter().zip(&gl.weights) {
                let u = 0.5 * (pu + 1.0);
                let rho = rho_max * u.powf(1.0 / p);
                let w = Complex64::new(rho * cs - s, rho * sn);
                inner += 0.5 * wu * jac * lens_area(r, w.norm());
            }
        } else {
            for (pu, wu) in gl.nodes.iter().zip(&gl.weights) {
                let rho = r * (pu + 1.0);
                let dist = Complex64::new(s + rho * cs, rho * sn).norm();
                inner += r * wu * rho * lens_area(r, rho) * dist.powf(-alpha);
            }
        }
        total += 0.5 * PI * wp * inner;
    }
    2.0 * total * norm
}

/// `sum_{j,k} m_j m_k K(|c_j - c_k|)` with the disk-pair kernel. Pairs
/// farther apart than four radii use the center distance; nearer pairs
/// read a table of the kernel built once per call.
pub fn frostman_energy(mu: &EmpiricalMeasure, alpha: f64) -> Result<FrostmanEnergy> {
    if !(alpha > 0.0) {
        return domain(format!("alpha must be positive, got {alpha}"));
    }
    if alpha >= 2.0 {
        return Ok(FrostmanEnergy { value: f64::INFINITY, divergent_risk: true });
    }
    let r = mu.smear_radius;
    let gl = GaussLegendre::new(32);
    let cut = 4.0 * r;
    let cells = 256;
    let table: Vec<f64> = (0..=cells).map(|i| disk_pair_kernel(r, cut * i as f64 / cells as f64, alpha, &gl)).collect();
    let kernel = |s: f64| {
        if s > cut {
            s.powf(-alpha)
        } else {
            let x = s / cut * cells as f64;
            let i = (x.floor() as usize).min(cells - 1);
            let f = x - i as f64;
            table[i] * (1.0 - f) + table[i + 1] * f
        }
    };
    let mut e = 0.0;
    for (j, &(cj, mj)) in mu.atoms.iter().enumerate() {
        e += mj * mj * table[0];
        for &(ck, mk) in &mu.atoms[j + 1..] {
            e += 2.0 * mj * mk * kernel((cj - ck).norm());
        }
    }
    Ok(FrostmanEnergy { value: e, divergent_risk: false })
}

/// Atoms at `gamma(k/n)` with mass `F(k, n) / n`, smeared over disks of
/// radius `n^{-(1 - xi)/alpha}`, `xi = kappa^2 / 64`. The weight of atom `k`
/// comes from the reverse flow of `V` reversed at `k/n`.
pub fn trace_frostman_measure(driver: &DrivingPath, n: usize, phi0: Phi0, alpha: f64) -> Result<EmpiricalMeasure> {
    use rayon::prelude::*;
    let m = stride(driver.dt, n)?;
    let a = driver.a;
    let kappa = 2.0 / a;
    let xi = kappa * kappa / 64.0;
    let chain = build_chain(driver);
    let w0 = Complex64::new(0.0, 1.0 / (n as f64).sqrt());
    let atoms: Result<Vec<(Complex64, f64)>> = (1..=driver.steps() / m)
        .into_par_iter()
        .map(|k| {
            let s = k * m;
            let v = &driver.values[..=s];
            let rev: Vec<f64> = v.iter().rev().map(|x| x - v[s]).collect();
            let u = DrivingPath::new(driver.dt, rev, a)?;
            let st = reverse_point(&u, w0, Integrator::ExactSlit)?;
            let ev = good_event_indicator(&st, n, phi0, a)?;
            Ok((chain.tip(s), frostman_weight(&st, n, a, &ev) / n as f64))
        })
        .collect();
    EmpiricalMeasure::new(atoms?, (n as f64).powf(-(1.0 - xi) / alpha))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Self-energy of a unit disk from the density of `|X - Y|`,
    /// `p(s) = 2 s lens_area(1, s) / pi`, by a 1-D rule.
    fn self_energy_oracle(alpha: f64) -> f64 {
        let gl = GaussLegendre::new(40);
        // s = 2 v^{1/(2-alpha)} removes the s^{1-alpha} singularity
        let p = 2.0 - alpha;
        gl.composite(0.0, 1.0, 32, |v| {
            let s = 2.0 * v.powf(1.0 / p);
            2.0 * lens_area(1.0, s) / PI * 2f64.powf(p) / p
        })
    }

    #[test]
    fn lens_area_limits() {
        assert!((lens_area(1.0, 0.0) - PI).abs() < 1e-14);
        assert_eq!(lens_area(1.0, 2.0), 0.0);
        // density of |X - Y| integrates to one
        let gl = GaussLegendre::new(40);
        let tot = gl.composite(0.0, 2.0, 16, |s| 2.0 * s * lens_area(1.0, s) / PI);
        assert!((tot - 1.0).abs() < 1e-9);
    }

    #[test]
    fn self_energy_matches_oracle() {
        let gl = GaussLegendre::new(32);
        for alpha in [0.5, 1.0, 1.2, 1.8] {
            let k = disk_pair_kernel(1.0, 0.0, alpha, &gl);
            let o = self_energy_oracle(alpha);
            assert!((k - o).abs() < 1e-3 * o, "alpha={alpha}: {k} vs {o}");
        }
    }

    #[test]
    fn far_field_continuity() {
        let gl = GaussLegendre::new(32);
        for alpha in [1.0, 1.5] {
            // E|s + W|^{-alpha} ~ s^{-alpha} (1 + alpha^2 E|W|^2 / (4 s^2)), E|W|^2 = r^2
            let s = 8.0;
            let k = disk_pair_kernel(1.0, s, alpha, &gl);
            let approx = s.powf(-alpha) * (1.0 + alpha * alpha / (4.0 * s * s));
            assert!((k / approx - 1.0).abs() < 1e-3, "alpha={alpha}: {k} vs {approx}");
            // both branches meet continuously at s = 2r
            let lo = disk_pair_kernel(1.0, 2.0 - 1e-9, alpha, &gl);
            let hi = disk_pair_kernel(1.0, 2.0, alpha, &gl);
            assert!((lo / hi - 1.0).abs() < 0.01, "alpha={alpha}: {lo} vs {hi}");
        }
    }

    #[test]
    fn two_distant_atoms() {
        let mu = EmpiricalMeasure::new(vec![(Complex64::new(0.0, 0.0), 0.5), (Complex64::new(1.0, 0.0), 0.5)], 1e-3).unwrap();
        for alpha in [0.5, 1.0, 1.5] {
            let e = frostman_energy(&mu, alpha).unwrap().value;
            let self_part = 0.5 * disk_pair_kernel(1e-3, 0.0, alpha, &GaussLegendre::new(32));
            assert!((e - self_part - 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn self_energy_scales() {
        let one = |r: f64| frostman_energy(&EmpiricalMeasure::new(vec![(Complex64::new(0.0, 0.0), 1.0)], r).unwrap(), 1.2).unwrap().value;
        assert!((one(0.01) / one(1.0) - 0.01f64.powf(-1.2)).abs() < 1e-9 * 0.01f64.powf(-1.2));
    }

    #[test]
    fn dilation_homogeneity() {
        let atoms = vec![
            (Complex64::new(0.0, 0.1), 0.3),
            (Complex64::new(0.05, 0.12), 0.2),
            (Complex64::new(0.5, 0.4), 0.5),
        ];
        let s = 3.0;
        let alpha = 1.1;
        let e1 = frostman_energy(&EmpiricalMeasure::new(atoms.clone(), 0.02).unwrap(), alpha).unwrap().value;
        let scaled: Vec<_> = atoms.iter().map(|&(c, m)| (c * s, m)).collect();
        let e2 = frostman_energy(&EmpiricalMeasure::new(scaled, 0.02 * s).unwrap(), alpha).unwrap().value;
        assert!((e2 / e1 - s.powf(-alpha)).abs() < 1e-9);
    }

    #[test]
    fn alpha_two_flagged() {
        let mu = EmpiricalMeasure::new(vec![(Complex64::new(0.0, 0.0), 1.0)], 0.1).unwrap();
        let e = frostman_energy(&mu, 2.0).unwrap();
        assert!(e.divergent_risk && e.value.is_infinite());
        assert!(EmpiricalMeasure::new(vec![], 0.0).is_err());
    }
}
