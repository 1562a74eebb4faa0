//! Natural-parametrization estimators on simulated traces.

use sle_core::natural::{
    frostman_energy, tau_d_variation, tau_derivative_sum, tau_derivative_sum_multi, trace_frostman_measure, Phi0,
};
use sle_core::loewner::trace;
use sle_core::{brownian_from_key, Welford};

#[test]
fn series_are_monotone_from_zero() {
    let a = 0.75;
    let d = brownian_from_key(1.0, 1.0 / 2048.0, a, 9, 0).unwrap();
    for s in tau_derivative_sum_multi(&d, &[16, 64, 256], a).unwrap() {
        assert!(s.is_nondecreasing());
    }
    let tr = trace(&d, 0.0);
    for n in [16, 128] {
        assert!(tau_d_variation(&tr, n, 4.0 / 3.0).unwrap().is_nondecreasing());
    }
}

#[test]
fn derivative_sum_mean_stable_in_n() {
    let a = 0.75;
    let ns = [32, 64, 128];
    let mut w = vec![Welford::default(); ns.len()];
    for i in 0..60 {
        let d = brownian_from_key(1.0, 1.0 / 2048.0, a, 31, i).unwrap();
        for (j, s) in tau_derivative_sum_multi(&d, &ns, a).unwrap().iter().enumerate() {
            w[j].push(s.at(1.0));
        }
    }
    let means: Vec<f64> = w.iter().map(|w| w.mean).collect();
    let hi = means.iter().cloned().fold(0.0, f64::max);
    let lo = means.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(hi / lo < 1.5, "{means:?}");
    // single-n and multi-n paths agree exactly
    let d = brownian_from_key(1.0, 1.0 / 2048.0, a, 31, 0).unwrap();
    assert_eq!(tau_derivative_sum(&d, 64, a).unwrap().taus, tau_derivative_sum_multi(&d, &[64], a).unwrap()[0].taus);
}

#[test]
fn frostman_energy_does_not_blow_up() {
    for alpha in [1.0, 1.2] {
        let energy = |n: usize| {
            (0..4u64)
                .map(|i| {
                    let d = brownian_from_key(1.0, 1.0 / 2048.0, 0.75, 3, i).unwrap();
                    let mu = trace_frostman_measure(&d, n, Phi0::default(), alpha).unwrap();
                    frostman_energy(&mu, alpha).unwrap().value
                })
                .sum::<f64>()
                / 4.0
        };
        let e: Vec<f64> = [32, 64, 128].iter().map(|&n| energy(n)).collect();
        assert!(e.iter().all(|v| v.is_finite() && *v > 0.0));
        assert!(e[2] < 1.5 * e[0], "alpha {alpha}: {e:?}");
    }
}
