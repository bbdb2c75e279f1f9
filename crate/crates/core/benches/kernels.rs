//! Hot kernels on a one-thread pool against the default pool.
//!
//! `cargo bench -p kantoreg` times the rayon build on both pools. The sequential
//! fallback is `cargo bench -p kantoreg --no-default-features`; there both pools
//! run the plain loops and should time the same.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use kantoreg::fit::{default_knots, grad_theta};
use kantoreg::grid::{Density1D, Grid1D};
use kantoreg::model::{empirical_loss, Dataset, LossMode, ModelSpec, Sign, Smoothing, StepParams};
use kantoreg::ot2d::{c_transform_separable, ot_solve_2d, Density2D, Grid2D, OtConfig, Potential2D};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::ThreadPool;

fn pools() -> Vec<(String, ThreadPool)> {
    let default = rayon::ThreadPoolBuilder::new().build().unwrap();
    let label = format!("default-{}", default.current_num_threads());
    vec![("single".into(), rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap()), (label, default)]
}

fn dataset(n: usize, nodes: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let g = Grid1D::unit(nodes);
    let mut blob = || Density1D::truncated_normal(g, rng.gen_range(0.35..0.65), rng.gen_range(0.07..0.12)).unwrap();
    let responses = (0..n).map(|_| blob()).collect();
    let predictors = (0..n).map(|_| vec![blob(), blob()]).collect();
    Dataset::new(responses, predictors, vec![vec![]; n]).unwrap()
}

fn one_d(c: &mut Criterion) {
    let data = dataset(200, 401);
    let steps = (0..2)
        .map(|j| {
            let k = 50;
            let theta = (0..k).map(|l| 0.002 * (l + 1) as f64).collect();
            StepParams::new(default_knots(&data, j, k, 0.01), theta, Sign::Plus, Smoothing::Step).unwrap()
        })
        .collect();
    let model = ModelSpec::from_params(&data, steps, vec![]).unwrap();
    let mut group = c.benchmark_group("1d");
    for (label, pool) in pools() {
        group.bench_function(BenchmarkId::new("quadratic_loss", &label), |b| {
            b.iter(|| pool.install(|| empirical_loss(&model, &data, LossMode::Quadratic).unwrap()))
        });
        group.bench_function(BenchmarkId::new("grad_theta", &label), |b| {
            b.iter(|| pool.install(|| grad_theta(&model, &data, 0).unwrap()))
        });
    }
    group.finish();
}

fn two_d(c: &mut Criterion) {
    let g = Grid2D::unit(64);
    let phi = Potential2D::new(g, (0..g.len()).map(|i| 0.01 * ((i * 7919) % 101) as f64).collect()).unwrap();
    let small = Grid2D::unit(32);
    let a = Density2D::gaussian(small, (0.4, 0.45), 0.07).unwrap();
    let b = Density2D::gaussian(small, (0.6, 0.5), 0.07).unwrap();
    let ot = OtConfig::default();
    let mut group = c.benchmark_group("2d");
    group.sample_size(10);
    for (label, pool) in pools() {
        group.bench_function(BenchmarkId::new("c_transform_64", &label), |bch| {
            bch.iter(|| pool.install(|| c_transform_separable(&phi, &g)))
        });
        group.bench_function(BenchmarkId::new("ot_solve_32", &label), |bch| {
            bch.iter(|| pool.install(|| ot_solve_2d(&a, &b, &ot).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, one_d, two_d);
criterion_main!(benches);
