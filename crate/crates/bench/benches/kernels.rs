use std::hint::black_box;

use bfree_lab::bfree::sieve_interval;
use bfree_lab::exponents::optimize_theta;
use bfree_lab::expsum::quadruple_count;
use bfree_lab::kloosterman::kloosterman_sum;
use bfree_lab::rational::rat;
use bfree_lab::{BSet, ExponentPair, TauTable};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn sieve(c: &mut Criterion) {
    let mut g = c.benchmark_group("sieve_interval");
    let sq = BSet::squarefree();
    let gen = BSet::generated([2, 3, 5, 7]).unwrap();
    for y in [10_000u64, 100_000] {
        g.bench_with_input(BenchmarkId::new("squarefree", y), &y, |b, &y| {
            b.iter(|| sieve_interval(black_box(1_000_000_000), y, &sq).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("generated", y), &y, |b, &y| {
            b.iter(|| sieve_interval(black_box(1_000_000_000), y, &gen).unwrap())
        });
    }
    g.finish();
}

fn quadruples(c: &mut Criterion) {
    let mut g = c.benchmark_group("quadruple_count");
    for m in [256u64, 2_048] {
        g.bench_with_input(BenchmarkId::from_parameter(m), &m, |b, &m| {
            b.iter(|| quadruple_count(m, black_box(1.5), 0.01).unwrap())
        });
    }
    g.finish();
}

fn tau(c: &mut Criterion) {
    let mut g = c.benchmark_group("tau_table");
    g.sample_size(10);
    for n in [10_000usize, 100_000] {
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| b.iter(|| TauTable::compute(black_box(n)).unwrap()));
    }
    g.finish();
}

fn kloosterman(c: &mut Criterion) {
    let mut g = c.benchmark_group("kloosterman_sum");
    for q in [101u64, 1_009, 10_007] {
        g.bench_with_input(BenchmarkId::from_parameter(q), &q, |b, &q| {
            b.iter(|| kloosterman_sum(black_box(1), 1, q, 128).unwrap())
        });
    }
    g.finish();
}

fn theta(c: &mut Criterion) {
    let seeds = [ExponentPair::literature()];
    c.bench_function("optimize_theta", |b| b.iter(|| optimize_theta(black_box(&rat(1, 2)), &seeds, 3).unwrap()));
}

criterion_group!(benches, sieve, quadruples, tau, kloosterman, theta);
criterion_main!(benches);
