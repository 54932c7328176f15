//! Mittag-Leffler evaluation and nonuniform Caputo convolution.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fracwave_core::caputo_oracle::gconv_nodes;
use fracwave_core::mittag_leffler::MittagLeffler;

fn ml_eval(c: &mut Criterion) {
    let mut g = c.benchmark_group("ml_eval");
    for (alpha, beta) in [(1.5, 1.0), (1.5, 1.5), (1.9, 2.0)] {
        let ml = MittagLeffler::new(alpha, beta, 1e-13).unwrap();
        // One argument per regime: series, integral and asymptotic.
        for z in [-0.5, -8.0, -200.0] {
            g.bench_with_input(BenchmarkId::new(format!("a{alpha}_b{beta}"), z), &z, |b, &z| {
                b.iter(|| ml.eval(black_box(z)).unwrap())
            });
        }
    }
    g.finish();
}

fn caputo_convolution(c: &mut Criterion) {
    let mut g = c.benchmark_group("gconv_nodes");
    for n in [128usize, 512] {
        let nodes: Vec<f64> = (0..=n).map(|j| (j as f64 / n as f64).powi(3)).collect();
        let values: Vec<f64> = nodes.iter().map(|t| (1.0 + t).ln()).collect();
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| gconv_nodes(0.5, black_box(&nodes), black_box(&values)).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, ml_eval, caputo_convolution);
criterion_main!(benches);
