use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use eslab_core::dynamics::{langevin_step, FokkerPlanckSolver};
use eslab_core::ensemble::knn::kl_entropy;
use eslab_core::ensemble::{grid_from_gaussian, sample, Axis, GaussianDensity};
use eslab_core::landscape::Potential;
use eslab_core::transport::{sinkhorn, w2_discrete_exact, SinkhornOptions};

fn fokker_planck(c: &mut Criterion) {
    let p = Potential::double_well(1.0, 1).unwrap();
    let axes = [Axis::new(-3.0, 3.0, 1024).unwrap()];
    let mut q = grid_from_gaussian(&GaussianDensity::univariate(0.0, 0.2).unwrap(), &axes).unwrap();
    let mut solver = FokkerPlanckSolver::new(&axes, &p, 0.25).unwrap();
    let dt = solver.max_dt();
    c.bench_function("fp_step_1024", |b| b.iter(|| solver.step(black_box(&mut q), dt).unwrap()));

    let p2 = Potential::quadratic(1.0, 2).unwrap();
    let axes2 = [Axis::new(-6.0, 6.0, 128).unwrap(), Axis::new(-6.0, 6.0, 128).unwrap()];
    let mut q2 = grid_from_gaussian(&GaussianDensity::isotropic(&[1.0, 0.0], 1.0).unwrap(), &axes2).unwrap();
    let mut solver2 = FokkerPlanckSolver::new(&axes2, &p2, 1.0).unwrap();
    let dt2 = solver2.max_dt();
    c.bench_function("fp_step_128x128", |b| b.iter(|| solver2.step(black_box(&mut q2), dt2).unwrap()));
}

fn langevin(c: &mut Criterion) {
    let p = Potential::quadratic(1.0, 1).unwrap();
    let e = sample(&GaussianDensity::univariate(2.0, 1.0).unwrap(), 100_000, 1).unwrap();
    c.bench_function("langevin_step_1e5", |b| b.iter(|| langevin_step(black_box(&e), &p, 1.0, 1e-3, 7, 0).unwrap()));
}

fn transport(c: &mut Criterion) {
    let a = sample(&GaussianDensity::isotropic(&[0.0, 0.0], 1.0).unwrap(), 256, 1).unwrap();
    let b = sample(&GaussianDensity::isotropic(&[1.0, -1.0], 2.0).unwrap(), 256, 2).unwrap();
    let mut g = c.benchmark_group("transport");
    g.sample_size(10);
    g.bench_function("exact_256", |bch| bch.iter(|| w2_discrete_exact(black_box(&a), black_box(&b)).unwrap()));
    let opts = SinkhornOptions { epsilon: 1e-2, ..Default::default() };
    g.bench_function("sinkhorn_256_eps1e-2", |bch| bch.iter(|| sinkhorn(black_box(&a), black_box(&b), &opts).unwrap()));
    g.finish();
}

fn entropy(c: &mut Criterion) {
    let e = sample(&GaussianDensity::isotropic(&[0.0, 0.0], 1.0).unwrap(), 20_000, 3).unwrap();
    let mut g = c.benchmark_group("knn");
    g.sample_size(10);
    g.bench_function("kl_entropy_2d_2e4", |b| b.iter(|| kl_entropy(black_box(&e), 3).unwrap()));
    g.finish();
}

criterion_group!(benches, fokker_planck, langevin, transport, entropy);
criterion_main!(benches);
