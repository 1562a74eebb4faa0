//! One function per subcommand. Each reads its keys from the config,
//! runs the library and returns a report; files go to `output_dir`.

use std::path::PathBuf;

use num_complex::Complex64;
use serde_json::json;
use sle_core::diffusion::{
    concentration_tail, envelope_check, exp_moment_check, hitting_split, n_martingale_check, simulate_exit, stationarity,
};
use sle_core::dimension::{box_count_dimension, default_p_grid, holder_report, variation_scan, ScalingFit};
use sle_core::ensemble::{map_paths, mean_over};
use sle_core::green::{c_star, green_martingale_test, one_point_green_estimate};
use sle_core::loewner::{build_chain, trace_of_chain, Trace};
use sle_core::martingale::{
    derivative_moment_estimate, martingale_conservation_test, supermartingale_check, upper_bound_trend, McSpec,
};
use sle_core::natural::{
    frostman_weight, good_event_indicator, tau_d_variation, tau_derivative_sum_multi, tau_minkowski, BBox,
    MinkowskiOptions, Phi0,
};
use sle_core::params::inverse_exponents;
use sle_core::{brownian_from_key, derive_exponents, reverse_driver, reverse_point, Integrator, Welford};

use crate::config::{usage, Config};
use crate::report::{Report, Table};

pub const COMMON: &[&str] = &["seed", "output_dir"];

pub const SIMULATE_TRACE: &[&str] = &["kappa", "T", "dt", "y0", "out", "driver_out"];
pub const CHECK_MARTINGALE: &[&str] =
    &["kappa", "kind", "r", "z", "t", "paths", "dt", "integrator", "theta", "delta", "floor", "x", "s"];
pub const DIFFUSION_STATS: &[&str] =
    &["kind", "q", "r", "T", "dt", "paths", "x0", "delta", "sample_every", "u", "alphas", "y"];
pub const DERIVATIVE_MOMENTS: &[&str] = &["kappa", "lambda", "t", "paths", "dt", "integrator", "tol"];
pub const GREEN_FUNCTION: &[&str] = &["kappa", "z", "eps", "paths", "ds", "tol_z", "tol_c"];
pub const NATURAL_PARAM: &[&str] =
    &["kappa", "n", "T", "dt", "paths", "candidate", "compare_paths", "phi0_c", "phi0_u", "tol"];
pub const ESTIMATE_DIMENSION: &[&str] = &["kappa", "method", "T", "dt", "paths", "t_lo", "scales", "tol"];

fn output_dir(cfg: &mut Config) -> anyhow::Result<PathBuf> {
    Ok(PathBuf::from(cfg.string("output_dir", ".")?))
}

fn kappa_a(cfg: &mut Config) -> anyhow::Result<(f64, f64)> {
    let kappa = cfg.positive("kappa", None)?;
    Ok((kappa, 2.0 / kappa))
}

fn integrator(cfg: &mut Config) -> anyhow::Result<Integrator> {
    Ok(match cfg.choice("integrator", "exact", &["exact", "midpoint"])?.as_str() {
        "exact" => Integrator::ExactSlit,
        _ => Integrator::default(),
    })
}

fn finish(cfg: &mut Config, command: &str, pass: bool, result: serde_json::Value, tables: Vec<(&str, Table)>) -> anyhow::Result<Report> {
    let dir = output_dir(cfg)?;
    let mut rep = Report::new(command, cfg.values(), pass, result);
    for (name, t) in tables {
        rep = rep.with_table(name, t);
    }
    rep.save(&dir, command)?;
    Ok(rep)
}

pub fn simulate_trace(cfg: &mut Config) -> anyhow::Result<Report> {
    let (_, a) = kappa_a(cfg)?;
    let t = cfg.positive("T", Some("1"))?;
    let dt = cfg.positive("dt", Some("1e-3"))?;
    let seed = cfg.u64("seed", "0")?;
    let y0 = cfg.f64("y0", Some("0"))?;
    let dir = output_dir(cfg)?;
    let out = PathBuf::from(cfg.string("out", &dir.join("trace.csv").to_string_lossy())?);
    let d = sle_core::sample_brownian_driver(t, dt, a, seed)?;
    if cfg.has("driver_out") {
        let p = PathBuf::from(cfg.string("driver_out", "")?);
        let f = std::io::BufWriter::new(std::fs::File::create(&p)?);
        if p.extension().is_some_and(|e| e == "csv") {
            d.write_csv(f)?;
        } else {
            d.write_binary(f)?;
        }
    }
    let chain = build_chain(&d);
    let tr = trace_of_chain(&chain, y0);
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    tr.write_csv(std::io::BufWriter::new(std::fs::File::create(&out)?))?;
    let end = tr.points[tr.len() - 1];
    let result = json!({
        "points": tr.len(),
        "hcap": chain.hcap(),
        "end": [end.re, end.im],
        "csv": out.to_string_lossy(),
    });
    finish(cfg, "simulate-trace", true, result, vec![])
}

pub fn check_martingale(cfg: &mut Config) -> anyhow::Result<Report> {
    let (_, a) = kappa_a(cfg)?;
    let kind = cfg.choice("kind", "conservation", &["conservation", "supermartingale", "green", "upper-bound"])?;
    let seed = cfg.u64("seed", "0")?;
    let n_paths = cfg.count("paths", "10000")?;
    let dt = cfg.positive("dt", Some("1e-3"))?;
    let mc = McSpec { n_paths, dt, seed, integrator: integrator(cfg)? };
    match kind.as_str() {
        "conservation" => {
            let r = cfg.f64("r", Some("1"))?;
            let zs = cfg.complex_list("z", "i")?;
            let ts = cfg.f64_list("t", "0.5,1,2")?;
            let mut rows = Vec::new();
            let mut all = Vec::new();
            for z in zs {
                let res = martingale_conservation_test(r, a, z, &ts, &mc)?;
                for row in &res {
                    rows.push(vec![
                        z.re,
                        z.im,
                        row.t,
                        row.coarse.mean,
                        row.coarse.stderr,
                        row.coarse.zscore,
                        row.fine.mean,
                        row.finest.mean,
                        row.correction,
                        row.next_correction,
                        row.pass as u8 as f64,
                    ]);
                }
                all.push(json!({"z": [z.re, z.im], "rows": res}));
            }
            let pass = rows.iter().all(|r| r[10] == 1.0);
            let table = Table::new(
                &["re_z", "im_z", "t", "mean", "stderr", "zscore", "mean_half_dt", "mean_quarter_dt", "correction", "next_correction", "pass"],
                rows,
            );
            finish(cfg, "check-martingale", pass, json!(all), vec![("conservation", table)])
        }
        "supermartingale" => {
            let theta = cfg.f64("theta", Some("0.5"))?;
            let delta = cfg.f64("delta", Some("0.5"))?;
            let z = cfg.complex_list("z", "i")?[0];
            let ts = cfg.f64_list("t", "1")?;
            let mut out = Vec::new();
            for &t in &ts {
                out.push((t, supermartingale_check(theta, delta, a, z, t, &mc)?));
            }
            let pass = out.iter().all(|(_, r)| r.pass);
            let rows = out.iter().map(|(t, r)| vec![*t, r.stats.mean, r.stats.stderr, r.stats.target]).collect();
            let table = Table::new(&["t", "mean", "stderr", "initial"], rows);
            finish(cfg, "check-martingale", pass, json!(out), vec![("supermartingale", table)])
        }
        "green" => {
            let z = cfg.complex_list("z", "i")?[0];
            let ts = cfg.f64_list("t", "0.5,1")?;
            let floor = cfg.positive("floor", Some("0.05"))?;
            let rows = green_martingale_test(a, z, &ts, n_paths, dt, seed, floor)?;
            let pass = rows.iter().all(|r| r.stats.within(3.0));
            let t_rows = rows.iter().map(|r| vec![r.t, r.stats.mean, r.stats.stderr, r.stats.target, r.stats.zscore]).collect();
            let table = Table::new(&["t", "mean", "stderr", "target", "zscore"], t_rows);
            finish(cfg, "check-martingale", pass, json!(rows), vec![("green", table)])
        }
        _ => {
            let r = cfg.f64("r", Some("1"))?;
            let x = cfg.f64("x", Some("0"))?;
            let s = cfg.f64_list("s", "1,2,4,8")?;
            let trend = upper_bound_trend(r, a, x, &s, &mc);
            let table = Table::new(&["s", "scaled_moment"], trend.scaled.iter().map(|&(s, v)| vec![s, v]).collect());
            finish(cfg, "check-martingale", true, json!(trend), vec![("upper_bound", table)])
        }
    }
}

pub fn diffusion_stats(cfg: &mut Config) -> anyhow::Result<Report> {
    let kind = cfg.choice(
        "kind",
        "stationarity",
        &["stationarity", "exp-moment", "n-martingale", "concentration", "envelope", "hitting"],
    )?;
    let q = cfg.positive("q", None)?;
    let seed = cfg.u64("seed", "0")?;
    let cmd = "diffusion-stats";
    match kind.as_str() {
        "stationarity" => {
            let t = cfg.positive("T", Some("500"))?;
            let dt = cfg.positive("dt", Some("1e-2"))?;
            let every = cfg.positive("sample_every", Some("0.5"))?;
            let n = cfg.count("paths", "200")?;
            let rep = stationarity(q, t, dt, every, n, seed);
            let pass = rep.ks_distance < 0.02 && rep.l_rate.zscore.abs() <= 3.0;
            let hist = Table::new(&["k", "empirical", "density"], rep.histogram.iter().map(|&(x, e, m)| vec![x, e, m]).collect());
            finish(cfg, cmd, pass, json!(rep), vec![("histogram", hist)])
        }
        "exp-moment" => {
            let delta = cfg.f64("delta", Some("0.5"))?;
            let t = cfg.positive("T", Some("1"))?;
            let x0 = cfg.f64("x0", Some("0"))?;
            let n = cfg.count("paths", "100000")?;
            let dt = cfg.positive("dt", Some("1e-3"))?;
            let rep = exp_moment_check(q, delta, t, x0, n, dt, seed);
            finish(cfg, cmd, rep.zscore.abs() <= 3.0, json!(rep), vec![])
        }
        "n-martingale" => {
            let r = cfg.f64("r", Some("1"))?;
            let t = cfg.positive("T", Some("1"))?;
            let x0 = cfg.f64("x0", Some("0"))?;
            let n = cfg.count("paths", "100000")?;
            let dt = cfg.positive("dt", Some("1e-3"))?;
            let rep = n_martingale_check(q, r, t, x0, n, dt, seed);
            finish(cfg, cmd, rep.zscore.abs() <= 3.0, json!(rep), vec![])
        }
        "concentration" => {
            let t = cfg.positive("T", Some("10"))?;
            let alphas = cfg.f64_list("alphas", "1,2,3,4")?;
            let n = cfg.count("paths", "10000")?;
            let dt = cfg.positive("dt", Some("1e-2"))?;
            let rep = concentration_tail(q, t, &alphas, n, dt, seed);
            let table = Table::new(&["alpha", "frequency"], rep.alphas.iter().zip(&rep.frequencies).map(|(&a, &f)| vec![a, f]).collect());
            finish(cfg, cmd, true, json!(rep), vec![("concentration", table)])
        }
        "envelope" => {
            let u = cfg.positive("u", Some("1"))?;
            let t = cfg.positive("T", Some("10"))?;
            let n = cfg.count("paths", "1000")?;
            let dt = cfg.positive("dt", Some("1e-2"))?;
            let rep = envelope_check(q, u, t, n, dt, seed);
            let result = json!({"q": rep.q, "u": rep.u, "t": rep.t, "c_star_90": rep.c_star_90});
            let table = Table::new(&["c", "coverage"], rep.required.iter().map(|&c| vec![c, rep.coverage(c)]).collect());
            finish(cfg, cmd, true, result, vec![("envelope", table)])
        }
        _ => {
            let x0 = cfg.f64("x0", Some("0.5"))?;
            let y = cfg.positive("y", Some("1"))?;
            let n = cfg.count("paths", "10000")?;
            let dt = cfg.positive("dt", Some("1e-4"))?;
            if !(x0 > 0.0 && x0 < y) {
                return usage(format!("hitting needs 0 < x0 < y, got x0={x0}, y={y}"));
            }
            let target = hitting_split(q, x0, y)?;
            let w = mean_over(n, |i| simulate_exit(q, x0, y, dt, seed, i) as u8 as f64);
            let rep = sle_core::diffusion::DiffusionReport::from_welford("hitting", &w, target);
            finish(cfg, cmd, rep.zscore.abs() <= 3.0, json!(rep), vec![])
        }
    }
}

pub fn derivative_moments(cfg: &mut Config) -> anyhow::Result<Report> {
    let (kappa, a) = kappa_a(cfg)?;
    let d = derive_exponents(kappa)?.d;
    let lambda = cfg.f64("lambda", Some(&d.to_string()))?;
    let ts = cfg.f64_list("t", "1,2,4,8,16,32,64")?;
    let n_paths = cfg.count("paths", "5000")?;
    let dt = cfg.positive("dt", Some("1e-3"))?;
    let seed = cfg.u64("seed", "0")?;
    let tol = cfg.positive("tol", Some("0.05"))?;
    let mc = McSpec { n_paths, dt, seed, integrator: integrator(cfg)? };
    let inv = inverse_exponents(lambda, a)?;
    // below lambda_c the moment decays like t^{-zeta/2}
    let target = if lambda <= inv.lambda_c { -inv.zeta / 2.0 } else { f64::NAN };
    let m = derivative_moment_estimate(lambda, a, &ts, &mc);
    let pass = target.is_nan() || (m.fit.slope - target).abs() <= tol;
    let rows = m.rows.iter().map(|(t, s)| vec![*t, s.mean, s.stderr, t.ln(), s.mean.ln()]).collect();
    let table = Table::new(&["t", "mean", "stderr", "log_t", "log_mean"], rows);
    let result = json!({"lambda": lambda, "slope": m.fit.slope, "slope_stderr": m.fit.stderr, "target_slope": target, "fit": m.fit});
    finish(cfg, "derivative-moments", pass, result, vec![("moments", table)])
}

pub fn green_function(cfg: &mut Config) -> anyhow::Result<Report> {
    let (_, a) = kappa_a(cfg)?;
    let zs = cfg.complex_list("z", "i,1+i,2i")?;
    let eps = cfg.f64_list("eps", "0.05")?;
    let n_paths = cfg.count("paths", "100000")?;
    let ds = cfg.positive("ds", Some("5e-3"))?;
    let seed = cfg.u64("seed", "0")?;
    let tol_z = cfg.positive("tol_z", Some("0.15"))?;
    let tol_c = cfg.positive("tol_c", Some("0.2"))?;
    let tab = one_point_green_estimate(a, &zs, &eps, n_paths, ds, seed)?;
    let cs = c_star(a);
    let mut pass = true;
    let mut summary = Vec::new();
    for &e in &eps {
        let ratios: Vec<f64> = tab.rows.iter().filter(|r| r.eps == e).map(|r| r.ratio).collect();
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        let spread = ratios.iter().map(|r| (r / mean - 1.0).abs()).fold(0.0, f64::max);
        let ok = spread <= tol_z && (mean / cs - 1.0).abs() <= tol_c;
        pass &= ok;
        summary.push(json!({"eps": e, "mean_ratio": mean, "max_relative_spread": spread, "c_star": cs, "pass": ok}));
    }
    let rows = tab
        .rows
        .iter()
        .map(|r| vec![r.z.re, r.z.im, r.eps, r.probability, r.stderr, r.green, r.ratio, r.ratio_stderr])
        .collect();
    let table = Table::new(&["re_z", "im_z", "eps", "probability", "stderr", "green", "ratio", "ratio_stderr"], rows);
    finish(cfg, "green-function", pass, json!({"table": tab, "summary": summary}), vec![("one_point", table)])
}

struct NaturalPath {
    taus: Vec<Vec<f64>>,
    good: Vec<bool>,
    weight: Vec<f64>,
}

pub fn natural_param(cfg: &mut Config) -> anyhow::Result<Report> {
    let (kappa, a) = kappa_a(cfg)?;
    let d = derive_exponents(kappa)?.d;
    let ns = cfg.count_list("n", "64,128,256,512")?;
    let t = cfg.positive("T", Some("1"))?;
    let dt = cfg.positive("dt", Some("1/8192"))?;
    let n_paths = cfg.count("paths", "200")?;
    let seed = cfg.u64("seed", "0")?;
    let candidate = cfg.choice("candidate", "derivative-sum", &["derivative-sum", "all"])?;
    let compare = cfg.count("compare_paths", "10")?;
    let phi0 = Phi0 { c: cfg.positive("phi0_c", Some("10"))?, u: cfg.positive("phi0_u", Some("1"))? };
    let tol = cfg.positive("tol", Some("1.5"))?;
    // validate the grid once before the ensemble
    tau_derivative_sum_multi(&brownian_from_key(t, dt, a, seed, 0)?, &ns, a)?;
    let paths: Vec<NaturalPath> = map_paths(n_paths, |i| {
        let drv = brownian_from_key(t, dt, a, seed, i).expect("valid grid");
        let series = tau_derivative_sum_multi(&drv, &ns, a).expect("valid grid");
        let (u, _) = reverse_driver(&drv, drv.dt).expect("grid time");
        let mut good = Vec::new();
        let mut weight = Vec::new();
        for &n in &ns {
            let st = reverse_point(&u, Complex64::new(0.0, 1.0 / (n as f64).sqrt()), Integrator::ExactSlit).expect("interior point");
            let ev = good_event_indicator(&st, n, phi0, a).expect("start matches");
            good.push(ev.overall);
            weight.push(frostman_weight(&st, n, a, &ev));
        }
        NaturalPath { taus: series.into_iter().map(|s| s.taus).collect(), good, weight }
    });
    let mut rows = Vec::new();
    let mut per_n = Vec::new();
    for (j, &n) in ns.iter().enumerate() {
        let len = paths[0].taus[j].len();
        for k in 0..len {
            let w = Welford::from_slice(&paths.iter().map(|p| p.taus[j][k]).collect::<Vec<_>>());
            rows.push(vec![n as f64, k as f64 / n as f64, w.mean, w.stderr()]);
        }
        let end = Welford::from_slice(&paths.iter().map(|p| *p.taus[j].last().unwrap()).collect::<Vec<_>>());
        let good = paths.iter().filter(|p| p.good[j]).count() as f64 / n_paths as f64;
        let fw = Welford::from_slice(&paths.iter().map(|p| p.weight[j]).collect::<Vec<_>>());
        per_n.push(json!({
            "n": n, "tau_end_mean": end.mean, "tau_end_stderr": end.stderr(),
            "good_event_fraction": good, "weight_mean": fw.mean, "weight_stderr": fw.stderr(),
        }));
    }
    let ends: Vec<f64> = per_n.iter().map(|v| v["tau_end_mean"].as_f64().unwrap()).collect();
    let ratio = ends.iter().cloned().fold(0.0, f64::max) / ends.iter().cloned().fold(f64::INFINITY, f64::min);
    let pass = ratio <= tol;
    let mut tables = vec![("tau", Table::new(&["n", "t", "tau_mean", "tau_stderr"], rows))];
    let mut comparison = serde_json::Value::Null;
    if candidate == "all" {
        let m = compare.min(n_paths);
        let cmp: Vec<Vec<(f64, f64)>> = (0..m as u64)
            .map(|i| {
                let drv = brownian_from_key(t, dt, a, seed, i).expect("valid grid");
                let tr = trace_of_chain(&build_chain(&drv), 0.0);
                ns.iter()
                    .map(|&n| {
                        let var = tau_d_variation(&tr, n, d).map(|s| *s.taus.last().unwrap()).unwrap_or(f64::NAN);
                        let eps = 1.0 / n as f64;
                        let bbox = BBox::around(&tr.points, 2.0 * eps);
                        let opts = MinkowskiOptions { grid_h: eps / 4.0, upper_half_only: true };
                        let mink = tau_minkowski(&tr, eps, d, bbox, opts).unwrap_or(f64::NAN);
                        (var, mink)
                    })
                    .collect()
            })
            .collect();
        let mut crow = Vec::new();
        let mut cjson = Vec::new();
        for (j, &n) in ns.iter().enumerate() {
            let var = cmp.iter().map(|p| p[j].0).sum::<f64>() / m as f64;
            let mink = cmp.iter().map(|p| p[j].1).sum::<f64>() / m as f64;
            let ds = paths[..m].iter().map(|p| *p.taus[j].last().unwrap()).sum::<f64>() / m as f64;
            crow.push(vec![n as f64, ds, var, mink, var / ds, mink / ds]);
            cjson.push(json!({"n": n, "derivative_sum": ds, "d_variation": var, "minkowski": mink,
                "variation_ratio": var / ds, "minkowski_ratio": mink / ds}));
        }
        tables.push(("candidates", Table::new(&["n", "derivative_sum", "d_variation", "minkowski", "variation_ratio", "minkowski_ratio"], crow)));
        comparison = json!(cjson);
    }
    let result = json!({"per_n": per_n, "stability_ratio": ratio, "tolerance": tol, "candidates": comparison});
    finish(cfg, "natural-param", pass, result, tables)
}

pub fn estimate_dimension(cfg: &mut Config) -> anyhow::Result<Report> {
    let (kappa, a) = kappa_a(cfg)?;
    let d = derive_exponents(kappa)?.d;
    let method = cfg.choice("method", "box", &["box", "variation", "holder"])?;
    let t = cfg.positive("T", Some("1"))?;
    let dt = cfg.positive("dt", Some(if method == "box" { "5e-5" } else { "1/16384" }))?;
    let n_paths = cfg.count("paths", "20")?;
    let seed = cfg.u64("seed", "0")?;
    let t_lo = cfg.f64("t_lo", Some("0.1"))?;
    let tol = cfg.positive("tol", Some("0.15"))?;
    let scales = if cfg.has("scales") { Some(cfg.f64_list("scales", "")?) } else { None };
    if !(0.0..1.0).contains(&t_lo) {
        return usage(format!("t_lo must lie in [0, 1), got {t_lo}"));
    }
    brownian_from_key(t, dt, a, seed, 0)?;
    let fits: Vec<sle_core::Result<ScalingFit>> = map_paths(n_paths, |i| {
        let drv = brownian_from_key(t, dt, a, seed, i).expect("valid grid");
        let tr = trace_of_chain(&build_chain(&drv), 0.0);
        match method.as_str() {
            "box" => {
                let w = tr.window(t_lo * t, t);
                let s = scales.clone().unwrap_or_else(|| auto_scales(&w));
                box_count_dimension(&w, &s)
            }
            "variation" => variation_scan(&tr, &default_p_grid()).and_then(|s| {
                let p = s.estimate.unwrap_or(f64::NAN);
                Ok(ScalingFit { xs: s.p_grid, ys: s.slopes, slope: p, stderr: f64::NAN, r2: f64::NAN })
            }),
            _ => holder_report(&tr.window(t_lo * t, t)),
        }
    });
    let fits: Vec<ScalingFit> = fits.into_iter().collect::<sle_core::Result<_>>()?;
    let est: Vec<f64> = fits.iter().map(|f| f.slope).collect();
    let w = Welford::from_slice(&est);
    let pass = match method.as_str() {
        "holder" => w.mean > 0.0,
        _ => (w.mean - d).abs() <= tol,
    };
    let rows = est.iter().enumerate().map(|(i, &e)| vec![i as f64, e, fits[i].stderr, fits[i].r2]).collect();
    let table = Table::new(&["path", "estimate", "stderr", "r2"], rows);
    let result = json!({"method": method, "target": d, "mean": w.mean, "stderr": w.stderr(), "tolerance": tol, "fits": fits});
    finish(cfg, "estimate-dimension", pass, result, vec![("estimates", table)])
}

/// Eight scales from an eighth of the diameter down by `2^{-3/4}` each,
/// which spans just over 1.5 decades.
pub fn auto_scales(tr: &Trace) -> Vec<f64> {
    let b = BBox::around(&tr.points, 0.0);
    let hi = b.width().max(b.height()) / 8.0;
    (0..8).map(|k| hi * 2f64.powf(-0.75 * k as f64)).collect()
}
