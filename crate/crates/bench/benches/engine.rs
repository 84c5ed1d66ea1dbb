use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use dpop_bench::{join_pair, joined, power_instance, random_instance};
use dpop_core::tables;
use dpop_core::{solve, EngineConfig, VarId};

fn join(c: &mut Criterion) {
    let mut group = c.benchmark_group("join");
    for density in [0.1, 0.5, 1.0] {
        let (u, v) = join_pair(8, density);
        group.bench_with_input(BenchmarkId::from_parameter(density), &(u, v), |b, (u, v)| {
            b.iter(|| tables::join(black_box(u), black_box(v)).unwrap())
        });
    }
    group.finish();
}

fn project(c: &mut Criterion) {
    let mut group = c.benchmark_group("project");
    for density in [0.1, 0.5, 1.0] {
        let t = joined(8, density);
        group.bench_with_input(BenchmarkId::from_parameter(density), &t, |b, t| {
            b.iter(|| tables::project(black_box(t), &[VarId(1), VarId(2)]).unwrap())
        });
    }
    group.finish();
}

fn solve_random(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_random");
    for p2 in [0.0, 0.3, 0.6] {
        let p = random_instance(p2);
        group.bench_with_input(BenchmarkId::from_parameter(p2), &p, |b, p| {
            b.iter(|| solve(black_box(p), &EngineConfig::default()).unwrap())
        });
    }
    group.finish();
}

fn solve_power(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_power");
    for (cap, hard) in [(2, true), (2, false), (4, true), (4, false)] {
        let p = power_instance(cap, hard);
        let label = format!("cap{cap}_{}", if hard { "hard" } else { "soft" });
        group.bench_with_input(BenchmarkId::from_parameter(label), &p, |b, p| {
            b.iter(|| solve(black_box(p), &EngineConfig::default()).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, join, project, solve_random, solve_power);
criterion_main!(benches);
