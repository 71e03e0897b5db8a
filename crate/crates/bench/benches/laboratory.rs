use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mlsilab_bench::{cloud_pair, kawasaki_workload, renorm_workload, tilt_workload};
use mlsilab_core::cramer::tilt_solve;
use mlsilab_core::kawasaki::simulate;
use mlsilab_core::renorm::renormalize;
use mlsilab_core::transport::{wasserstein_matching, wasserstein_sinkhorn};
use mlsilab_core::QuadratureSpec;

fn renorm(c: &mut Criterion) {
    let (psi, grid, quad) = renorm_workload();
    c.bench_function("renormalize double-well 201 nodes", |b| b.iter(|| renormalize(&psi, &grid, &quad).unwrap()));
}

fn legendre(c: &mut Criterion) {
    let (psi, m) = tilt_workload();
    let quad = QuadratureSpec::default();
    c.bench_function("tilt_solve quadcos m=1.3", |b| b.iter(|| tilt_solve(&psi, m, &quad).unwrap()));
}

fn transport(c: &mut Criterion) {
    let mut group = c.benchmark_group("transport");
    for n in [64usize, 256] {
        let (a, b) = cloud_pair(n);
        group.bench_with_input(BenchmarkId::new("matching d=2", n), &n, |bench, _| {
            bench.iter(|| wasserstein_matching(&a, &b, 2, 2.0).unwrap())
        });
    }
    let (a, b) = cloud_pair(64);
    group.sample_size(10);
    group.bench_function("sinkhorn d=2 n=64 eps=1e-2", |bench| bench.iter(|| wasserstein_sinkhorn(&a, &b, 2, 2.0, 1e-2, 100_000).unwrap()));
    group.finish();
}

fn kawasaki(c: &mut Criterion) {
    let (ens, cfg) = kawasaki_workload();
    c.bench_function("kawasaki N=8 64 paths x 1000 steps", |b| b.iter(|| simulate(&ens, &cfg, None).unwrap()));
}

criterion_group!(benches, renorm, legendre, transport, kawasaki);
criterion_main!(benches);
