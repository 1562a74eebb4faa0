//! Driving functions on uniform capacity-time grids.

use std::io::{Read, Write};

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::rng::{normal, path_rng};
use crate::table::{read_table, write_table};

const DRIVER_MAGIC: &[u8; 7] = b"SLEDRV1";

/// `U_0 .. U_N` sampled at `k * dt`. `a` records the capacity
/// parametrization (`hcap = a t`) the driver is meant for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrivingPath {
    pub dt: f64,
    pub values: Vec<f64>,
    pub a: f64,
    pub seed: Option<u64>,
}

impl DrivingPath {
    pub fn new(dt: f64, values: Vec<f64>, a: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return domain(format!("dt must be positive, got {dt}"));
        }
        if !(a > 0.0) {
            return domain(format!("a must be positive, got {a}"));
        }
        if values.len() < 2 {
            return domain("a driver needs at least two samples");
        }
        if values[0] != 0.0 {
            return domain(format!("driver must start at 0, got {}", values[0]));
        }
        Ok(DrivingPath { dt, values, a, seed: None })
    }

    /// Number of steps `N`.
    pub fn steps(&self) -> usize {
        self.values.len() - 1
    }

    pub fn total_time(&self) -> f64 {
        self.dt * self.steps() as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        self.dt * k as f64
    }

    /// Grid index of time `t`, if `t` lies on the grid.
    pub fn grid_index(&self, t: f64) -> Option<usize> {
        let x = t / self.dt;
        let k = x.round();
        if k < 0.0 || k > self.steps() as f64 || (x - k).abs() > 1e-9 * k.max(1.0) {
            None
        } else {
            Some(k as usize)
        }
    }

    /// Halves `dt` by Brownian-bridge midpoint insertion. The midpoints come
    /// from `stream` of the generator keyed by `key`, so the refined path is
    /// a realization coupled to `self`.
    pub fn refine(&self, key: u64, stream: u64) -> DrivingPath {
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        rng.set_stream(stream);
        let sd = (self.dt / 4.0).sqrt();
        let mut values = Vec::with_capacity(2 * self.values.len() - 1);
        for w in self.values.windows(2) {
            values.push(w[0]);
            values.push(0.5 * (w[0] + w[1]) + sd * normal(&mut rng));
        }
        values.push(*self.values.last().unwrap());
        DrivingPath { dt: self.dt / 2.0, values, a: self.a, seed: self.seed }
    }

    /// Restricts to the first `steps` steps.
    pub fn truncate(&self, steps: usize) -> DrivingPath {
        DrivingPath {
            dt: self.dt,
            values: self.values[..=steps.min(self.steps())].to_vec(),
            a: self.a,
            seed: self.seed,
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_table(
            out,
            &["t", "u"],
            self.values.iter().enumerate().map(|(k, &u)| vec![self.time(k), u]),
        )
    }

    /// Reads `t,u`. The grid spacing is taken from the first step and
    /// checked for uniformity; `a` is not stored in the CSV form.
    pub fn read_csv<R: Read>(input: R, a: f64) -> Result<Self> {
        let rows = read_table(input, &["t", "u"], "driver csv")?;
        if rows.len() < 2 {
            return Err(Error::Format { what: "driver csv", detail: "fewer than two rows".into() });
        }
        let dt = rows[1][0] - rows[0][0];
        for (k, row) in rows.iter().enumerate() {
            if (row[0] - dt * k as f64).abs() > 1e-9 * dt.max(1.0) * (k as f64).max(1.0) {
                return Err(Error::Format { what: "driver csv", detail: format!("non-uniform grid at row {}", k + 1) });
            }
        }
        DrivingPath::new(dt, rows.into_iter().map(|r| r[1]).collect(), a)
    }

    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(DRIVER_MAGIC)?;
        out.write_all(&self.dt.to_le_bytes())?;
        out.write_all(&self.a.to_le_bytes())?;
        out.write_all(&(self.seed.is_some() as u64).to_le_bytes())?;
        out.write_all(&self.seed.unwrap_or(0).to_le_bytes())?;
        out.write_all(&(self.values.len() as u64).to_le_bytes())?;
        for v in &self.values {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 7];
        input.read_exact(&mut magic)?;
        if &magic != DRIVER_MAGIC {
            return Err(Error::Format { what: "driver binary", detail: "bad magic".into() });
        }
        let dt = read_f64(&mut input)?;
        let a = read_f64(&mut input)?;
        let has_seed = read_u64(&mut input)? != 0;
        let seed = read_u64(&mut input)?;
        let n = read_u64(&mut input)? as usize;
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            values.push(read_f64(&mut input)?);
        }
        let mut p = DrivingPath::new(dt, values, a)?;
        p.seed = has_seed.then_some(seed);
        Ok(p)
    }
}

pub(crate) fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn step_count(t: f64, dt: f64) -> Result<usize> {
    if !(t > 0.0) || !(dt > 0.0) || !t.is_finite() {
        return domain(format!("T and dt must be positive, got T={t}, dt={dt}"));
    }
    if dt > t * (1.0 + 1e-12) {
        return domain(format!("dt={dt} exceeds T={t}"));
    }
    Ok(((t / dt).round() as usize).max(1))
}

/// Standard Brownian motion (unit diffusivity) on `[0, T]`.
pub fn sample_brownian_driver(t: f64, dt: f64, a: f64, seed: u64) -> Result<DrivingPath> {
    brownian_from_key(t, dt, a, seed, 0)
}

/// Brownian driver for ensemble member `index`; uses the key `seed ^ index`.
pub fn brownian_from_key(t: f64, dt: f64, a: f64, seed: u64, index: u64) -> Result<DrivingPath> {
    let n = step_count(t, dt)?;
    let mut rng = path_rng(seed, index);
    let sd = dt.sqrt();
    let mut values = Vec::with_capacity(n + 1);
    let mut u = 0.0;
    values.push(u);
    for _ in 0..n {
        u += sd * normal(&mut rng);
        values.push(u);
    }
    let mut p = DrivingPath::new(dt, values, a)?;
    p.seed = Some(seed ^ index);
    Ok(p)
}

/// Constant driver. Only zero is allowed since `U_0 = 0`.
pub fn constant_driver(t: f64, dt: f64, a: f64, value: f64) -> Result<DrivingPath> {
    if value != 0.0 {
        return domain(format!("only the zero constant driver is supported, got {value}"));
    }
    let n = step_count(t, dt)?;
    DrivingPath::new(dt, vec![0.0; n + 1], a)
}

/// Time reversal at total time `S + T`: returns `U_t = V_{S+T-t} - V_{S+T}`
/// on `[0, S+T]` and `U~_t = U_{T+t} - U_T` on `[0, S]`.
pub fn reverse_driver(path: &DrivingPath, split: f64) -> Result<(DrivingPath, DrivingPath)> {
    let m = match path.grid_index(split) {
        Some(m) if m >= 1 => m,
        _ => return domain(format!("split {split} is not a positive grid time of the driver")),
    };
    let n = path.steps();
    let end = path.values[n];
    let u: Vec<f64> = (0..=n).map(|k| path.values[n - k] - end).collect();
    let base = u[n - m];
    let tail: Vec<f64> = u[n - m..].iter().map(|x| x - base).collect();
    Ok((
        DrivingPath::new(path.dt, u, path.a)?,
        DrivingPath::new(path.dt, tail, path.a)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn shape_and_anchor() {
        let p = sample_brownian_driver(1.0, 0.5, 0.5, 7).unwrap();
        assert_eq!(p.values.len(), 3);
        assert_eq!(p.values[0], 0.0);
        assert_eq!(p.total_time(), 1.0);
    }

    #[test]
    fn deterministic() {
        let a = sample_brownian_driver(1.0, 0.01, 0.5, 42).unwrap();
        let b = sample_brownian_driver(1.0, 0.01, 0.5, 42).unwrap();
        assert_eq!(a, b);
        let c = sample_brownian_driver(1.0, 0.01, 0.5, 43).unwrap();
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn bad_inputs() {
        assert!(sample_brownian_driver(1.0, 0.0, 0.5, 1).is_err());
        assert!(sample_brownian_driver(0.0, 0.1, 0.5, 1).is_err());
        assert!(sample_brownian_driver(1.0, 2.0, 0.5, 1).is_err());
        assert!(constant_driver(1.0, 0.1, 0.5, 1.0).is_err());
    }

    #[test]
    fn zero_driver() {
        let p = constant_driver(1.0, 0.1, 0.5, 0.0).unwrap();
        assert_eq!(p.values, vec![0.0; 11]);
    }

    #[test]
    fn reverse_hand_example() {
        let v = DrivingPath::new(1.0, vec![0.0, 1.0, 3.0], 0.5).unwrap();
        let (u, tail) = reverse_driver(&v, 1.0).unwrap();
        assert_eq!(u.values, vec![0.0, -2.0, -3.0]);
        assert_eq!(tail.values, vec![0.0, -1.0]);
        assert!(reverse_driver(&v, 0.5).is_err());
        assert!(reverse_driver(&v, 0.0).is_err());
    }

    #[test]
    fn reverse_zero_path() {
        let z = constant_driver(2.0, 0.5, 1.0, 0.0).unwrap();
        let (u, t) = reverse_driver(&z, 1.0).unwrap();
        assert!(u.values.iter().chain(&t.values).all(|&x| x == 0.0));
    }

    #[test]
    fn unit_variance() {
        let m = 100_000u64;
        let mut w = crate::stats::Welford::default();
        for i in 0..m {
            let p = brownian_from_key(1.0, 0.25, 0.5, 99, i).unwrap();
            w.push(p.values[4]);
        }
        let var = w.variance();
        // stderr of the sample variance of a Gaussian: sqrt(2/(m-1))
        let se = (2.0 / (m as f64 - 1.0)).sqrt();
        assert!((var - 1.0).abs() < 3.0 * se, "var={var}");
        assert!(w.mean.abs() < 3.0 * (1.0 / m as f64).sqrt());
    }

    #[test]
    fn refinement_keeps_coarse_points() {
        let p = sample_brownian_driver(1.0, 0.125, 0.5, 3).unwrap();
        let r = p.refine(3, crate::rng::BRIDGE_STREAM);
        assert_eq!(r.dt, 0.0625);
        assert_eq!(r.values.len(), 17);
        for k in 0..=8 {
            assert_eq!(r.values[2 * k], p.values[k]);
        }
    }

    #[test]
    fn csv_round_trip() {
        let p = sample_brownian_driver(1.0, 0.1, 0.75, 5).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"t,u\n"));
        let q = DrivingPath::read_csv(&buf[..], 0.75).unwrap();
        assert_eq!(p.values, q.values);
        assert!((p.dt - q.dt).abs() < 1e-15);
    }

    #[test]
    fn binary_round_trip() {
        let p = sample_brownian_driver(1.0, 0.1, 0.75, 5).unwrap();
        let mut buf = Vec::new();
        p.write_binary(&mut buf).unwrap();
        assert_eq!(&buf[..7], b"SLEDRV1");
        let q = DrivingPath::read_binary(&buf[..]).unwrap();
        assert_eq!(p, q);
        buf[0] = b'X';
        assert!(DrivingPath::read_binary(&buf[..]).is_err());
    }

    proptest! {
        #[test]
        fn double_reversal_recovers(vals in prop::collection::vec(-5.0f64..5.0, 1..40), m_frac in 0.01f64..1.0) {
            let mut values = vec![0.0];
            values.extend(vals);
            let n = values.len() - 1;
            let v = DrivingPath::new(0.1, values, 0.5).unwrap();
            let m = ((m_frac * n as f64).ceil() as usize).clamp(1, n);
            let (u, tail) = reverse_driver(&v, m as f64 * 0.1).unwrap();
            prop_assert_eq!(tail.steps(), m);
            let (back, _) = reverse_driver(&u, m as f64 * 0.1).unwrap();
            for (x, y) in back.values.iter().zip(&v.values) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
