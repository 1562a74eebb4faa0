use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use num_complex::Complex64;
use sle_bench::fixture_driver;
use sle_core::loewner::trace_of_chain;
use sle_core::natural::tau_derivative_sum;
use sle_core::{build_chain, reverse_driver, reverse_point, Integrator};

fn chain(c: &mut Criterion) {
    let mut g = c.benchmark_group("chain");
    for n in [1024, 4096] {
        let d = fixture_driver(n, 1);
        g.bench_with_input(BenchmarkId::new("build", n), &d, |b, d| b.iter(|| build_chain(d)));
        let ch = build_chain(&d);
        g.bench_with_input(BenchmarkId::new("trace", n), &ch, |b, ch| b.iter(|| trace_of_chain(ch, 0.0)));
        g.bench_with_input(BenchmarkId::new("tip_last", n), &ch, |b, ch| b.iter(|| ch.tip(ch.len())));
    }
    g.finish();
}

fn reverse(c: &mut Criterion) {
    let d = fixture_driver(4096, 2);
    let (u, _) = reverse_driver(&d, d.dt).unwrap();
    let z = Complex64::new(0.0, 1.0);
    let mut g = c.benchmark_group("reverse_point");
    g.bench_function("exact", |b| b.iter(|| reverse_point(&u, z, Integrator::ExactSlit).unwrap()));
    g.bench_function("midpoint", |b| b.iter(|| reverse_point(&u, z, Integrator::default()).unwrap()));
    g.finish();
}

fn natural(c: &mut Criterion) {
    let d = fixture_driver(4096, 3);
    let mut g = c.benchmark_group("tau_derivative_sum");
    g.sample_size(10);
    for n in [64, 256] {
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| b.iter(|| tau_derivative_sum(&d, n, 0.75).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, chain, reverse, natural);
criterion_main!(benches);
