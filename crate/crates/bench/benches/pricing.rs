//! Chain pricing: direct Monte Carlo versus the network surrogate. The
//! surrogate's advantage is the headline number, so both sides price the
//! same 100-quote chain.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use deepcal_core::{
    otm_value, price_chain_mcs, Model, Network, OptionKind, PricerSpec, QuoteSpec,
    RiskNeutralParams,
};

const THETA: [f64; 5] = [2e-6, 0.25, 0.9, 0.3, 0.015];

fn chain() -> Vec<(f64, f64, QuoteSpec)> {
    (0..100)
        .map(|k| {
            let m = 0.7 + 0.008 * k as f64;
            let kind = if m < 1.0 {
                OptionKind::Put
            } else {
                OptionKind::Call
            };
            (
                m,
                0.6,
                QuoteSpec {
                    moneyness: m,
                    steps: 150,
                    kind,
                },
            )
        })
        .collect()
}

fn bench_mcs(c: &mut Criterion) {
    let params = RiskNeutralParams::from_slice(Model::Duan, &THETA).unwrap();
    let specs: Vec<QuoteSpec> = chain().into_iter().map(|(_, _, s)| s).collect();
    let mut group = c.benchmark_group("mcs_chain");
    group.sample_size(10);
    for paths in [2_000usize, 20_000] {
        group.bench_with_input(BenchmarkId::from_parameter(paths), &paths, |b, &paths| {
            b.iter(|| price_chain_mcs(black_box(&params), black_box(&specs), paths, 7).unwrap())
        });
    }
    group.finish();
}

fn bench_ann(c: &mut Criterion) {
    // Forward-pass cost depends on the topology alone, so untrained weights
    // measure the same thing a trained surface would.
    let net = Network::with_topology(&[7, 20, 20, 20, 1], 1).unwrap();
    let pricer = PricerSpec::Ann {
        call: &net,
        put: &net,
    };
    let quotes = chain();
    c.bench_function("ann_chain", |b| {
        b.iter(|| {
            let mut acc = 0.0;
            for (m, tau, _) in &quotes {
                acc += otm_value(Model::Duan, black_box(*m), *tau, &THETA, &pricer)
                    .unwrap()
                    .value;
            }
            acc
        })
    });
}

criterion_group!(benches, bench_mcs, bench_ann);
criterion_main!(benches);
