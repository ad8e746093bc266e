use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rio_bench::{correspondences, planted_graph, tls_problem};
use rio_core::registration::{max_clique, solve_scalar_tls};
use rio_core::{register, RegistrationParams};

fn scalar_tls(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_scalar_tls");
    for n in [100, 1_000, 10_000, 100_000] {
        let problem = tls_problem(n, 7);
        group.bench_with_input(BenchmarkId::from_parameter(n), &problem, |b, p| {
            b.iter(|| solve_scalar_tls(black_box(p)).unwrap())
        });
    }
    group.finish();
}

fn clique(c: &mut Criterion) {
    let mut group = c.benchmark_group("max_clique");
    for n in [50, 200, 500] {
        let graph = planted_graph(n, 0.1, n / 5, 3);
        group.bench_with_input(BenchmarkId::from_parameter(n), &graph, |b, g| {
            b.iter(|| max_clique(black_box(g)).unwrap())
        });
    }
    group.finish();
}

fn registration(c: &mut Criterion) {
    let mut group = c.benchmark_group("register");
    let params = RegistrationParams::default();
    for (n, rate) in [(200, 0.3), (500, 0.3), (500, 0.7)] {
        let pair = correspondences(n, rate);
        group.bench_with_input(BenchmarkId::new(format!("outliers_{rate}"), n), &pair, |b, p| {
            b.iter(|| register(black_box(&p.prev), black_box(&p.curr), &p.correspondences, &params).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, scalar_tls, clique, registration);
criterion_main!(benches);
