use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use mndbn_core::mixed_norm::batch_penalty_grad;
use mndbn_core::{GroupPartition, Matrix, PenaltyConfig, Rbm, Rng};

fn random_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.uniform())
}

fn matmul(c: &mut Criterion) {
    let mut rng = Rng::new(1);
    let mut group = c.benchmark_group("matmul");
    for (n, k, m) in [(100, 784, 100), (1000, 784, 100), (100, 500, 2000)] {
        let a = random_matrix(n, k, &mut rng);
        let b = random_matrix(k, m, &mut rng);
        group.bench_with_input(
            BenchmarkId::from_parameter(format!("{n}x{k}x{m}")),
            &(),
            |bench, _| bench.iter(|| black_box(a.matmul(&b).unwrap())),
        );
    }
    group.finish();
}

fn cd_step(c: &mut Criterion) {
    let mut rng = Rng::new(2);
    let mut group = c.benchmark_group("cd_step");
    for (visible, hidden) in [(784, 100), (784, 500)] {
        let m = Rbm::init_random(visible, hidden, &mut rng);
        let batch = random_matrix(100, visible, &mut rng);
        group.bench_with_input(
            BenchmarkId::from_parameter(format!("{visible}x{hidden}")),
            &(),
            |bench, _| bench.iter(|| black_box(m.cd_step(&batch, 1, &mut rng).unwrap())),
        );
    }
    group.finish();
}

fn penalty_grad(c: &mut Criterion) {
    let mut rng = Rng::new(3);
    let m = Rbm::init_random(784, 500, &mut rng);
    let batch = random_matrix(100, 784, &mut rng);
    let mut group = c.benchmark_group("penalty_grad");
    for (name, part) in [
        (
            "disjoint_g20",
            GroupPartition::make_nonoverlapping(500, 20).unwrap(),
        ),
        (
            "overlap_g20_50pct",
            GroupPartition::make_overlapping(500, 20, 0.5).unwrap(),
        ),
    ] {
        let cfg = PenaltyConfig::new(0.1, part).unwrap();
        group.bench_function(name, |bench| {
            bench.iter(|| black_box(batch_penalty_grad(&m, &batch, &cfg).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, matmul, cd_step, penalty_grad);
criterion_main!(benches);
