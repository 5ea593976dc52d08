//! Sequential vs rayon paths for the embarrassingly parallel kernels.

use std::f64::consts::PI;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use ifd_core::exprfield::{parse, Params};
use ifd_core::floquet::{alpha_sweep, FloquetOptions};
use ifd_core::mesh::sample_with;
use ifd_core::par::Parallelism;
use ifd_core::strategy::PeriodicPath;
use ifd_core::{Grid, PeriodicScalar, SpaceTimeField};

const MODES: [(&str, Parallelism); 2] = [
    ("sequential", Parallelism::Sequential),
    ("parallel", Parallelism::Parallel),
];

fn bench_alpha_sweep(c: &mut Criterion) {
    let g = Grid::new(1.0, 64, 1.0, 32).unwrap();
    let gamma = |t: f64| 0.5 + 0.25 * (2.0 * PI * t).sin();
    let v = SpaceTimeField::from_fn(g, |x, t| (-(x - gamma(t)).powi(2) / 0.08).exp());
    let path = PeriodicPath::new(PeriodicScalar::from_fn(g, gamma), 1, 0.05).unwrap();
    let alphas = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0];
    let mut group = c.benchmark_group("alpha_sweep");
    group.sample_size(10);
    for (name, mode) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| alpha_sweep(black_box(&v), &path, 1.0, &alphas, FloquetOptions::default(), mode).unwrap())
        });
    }
    group.finish();
}

fn bench_sampling(c: &mut Criterion) {
    let e = parse("exp(3*cos(pi*x)*(1 + 0.4*sin(2*pi*t))) + tanh(4*(x - 0.5))*cos(2*pi*t)^2").unwrap();
    let params = Params::new();
    let mut group = c.benchmark_group("sample_with");
    for n in [64usize, 256] {
        let g = Grid::new(1.0, n, 1.0, n).unwrap();
        for (name, mode) in MODES {
            group.bench_with_input(BenchmarkId::new(name, n), &g, |b, g| {
                b.iter(|| sample_with(black_box(&e), g, &params, mode).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, bench_alpha_sweep, bench_sampling);
criterion_main!(benches);
