//! Input-side costs: tempered-stable quantile-table construction, draws
//! from a built table, and Halton parameter-space generation.

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use deepcal_core::{
    build_inverse_cdf, sample_parameter_space, CtsParams, Model, ParameterRanges,
    DEFAULT_CDF_RESOLUTION,
};

fn bench_table_build(c: &mut Criterion) {
    let params = CtsParams::new(1.5, 2.0, 2.0).unwrap();
    let mut group = c.benchmark_group("cts_table_build");
    group.sample_size(20);
    group.bench_function("alpha_1.5_lambda_2", |b| {
        b.iter(|| build_inverse_cdf(black_box(&params), DEFAULT_CDF_RESOLUTION).unwrap())
    });
    group.finish();
}

fn bench_table_sampling(c: &mut Criterion) {
    let params = CtsParams::new(1.5, 2.0, 2.0).unwrap();
    let table = build_inverse_cdf(&params, DEFAULT_CDF_RESOLUTION).unwrap();
    c.bench_function("cts_sample_100k", |b| {
        b.iter(|| table.sample(100_000, black_box(5)))
    });
}

fn bench_halton(c: &mut Criterion) {
    let ranges = ParameterRanges::pricing();
    c.bench_function("halton_1k_points", |b| {
        b.iter(|| sample_parameter_space(Model::Cts, 1_000, black_box(&ranges), 1).unwrap())
    });
}

criterion_group!(benches, bench_table_build, bench_table_sampling, bench_halton);
criterion_main!(benches);
