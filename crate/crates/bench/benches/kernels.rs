use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::Rng;
use sanitizer_core::data::{AttributeSchema, Role};
use sanitizer_core::dcorr::dcorr;
use sanitizer_core::decoupler::{Batch, Objective};
use sanitizer_core::math::{standard_normal_matrix, Matrix, RngStream};
use sanitizer_core::{DecouplerConfig, DecouplerModel};

fn bench_dcorr(c: &mut Criterion) {
    let mut group = c.benchmark_group("dcorr");
    let mut rng = RngStream::new(0, 0);
    for n in [64, 256] {
        let x = standard_normal_matrix(n, 8, &mut rng);
        let y = standard_normal_matrix(n, 32, &mut rng);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| dcorr(black_box(&x), black_box(&y)).unwrap())
        });
    }
    group.finish();
}

fn bench_matmul(c: &mut Criterion) {
    let mut rng = RngStream::new(0, 1);
    let a = standard_normal_matrix(64, 768, &mut rng);
    let b = standard_normal_matrix(768, 256, &mut rng);
    c.bench_function("matmul 64x768 · 768x256", |bench| {
        bench.iter(|| black_box(&a).matmul(black_box(&b)).unwrap())
    });
}

fn bench_decoupler(c: &mut Criterion) {
    let cfg = DecouplerConfig::default();
    let heads = vec![AttributeSchema::new("sensitive", 4, Role::Sensitive)];
    let mut rng = RngStream::new(0, 2);
    let model = DecouplerModel::init(&cfg, [16, 16, 3], heads, &mut rng).unwrap();
    let n = cfg.batch_size;
    let x = Matrix::from_vec(n, 768, (0..n * 768).map(|_| rng.random::<f64>()).collect()).unwrap();
    let labels = vec![(0..n).map(|i| i % 4).collect::<Vec<_>>()];
    let noise = standard_normal_matrix(n, cfg.m, &mut rng);
    let batch = Batch {
        x: &x,
        sensitive: &labels,
        noise: &noise,
    };
    c.bench_function("decoupler forward", |b| b.iter(|| model.losses(black_box(&batch)).unwrap()));
    c.bench_function("decoupler forward+backward", |b| {
        b.iter(|| model.gradients(black_box(&batch), Objective::Joint).unwrap())
    });
}

criterion_group!(benches, bench_dcorr, bench_matmul, bench_decoupler);
criterion_main!(benches);
