use criterion::{criterion_group, criterion_main, Criterion};
use modelmix::market_data::TRADING_DAY;
use modelmix::models::{cf_price_surface, transition_law};
use modelmix::{density_from_cf, price_surface, OptionGrid};
use modelmix_bench::typical_instances;
use std::hint::black_box;

fn surfaces(c: &mut Criterion) {
    let grid = OptionGrid::default();
    let mut g = c.benchmark_group("price_surface");
    for m in typical_instances() {
        g.bench_function(m.family.to_string(), |b| {
            b.iter(|| price_surface(black_box(&m), 100.0, 0.01, &grid).unwrap())
        });
    }
    g.finish();
    let bs = &typical_instances()[0];
    c.bench_function("cf_price_surface/black_scholes", |b| {
        b.iter(|| cf_price_surface(black_box(bs), 100.0, &grid).unwrap())
    });
}

fn densities(c: &mut Criterion) {
    let mut g = c.benchmark_group("transition_law");
    for m in typical_instances() {
        g.bench_function(m.family.to_string(), |b| {
            b.iter(|| transition_law(black_box(&m), TRADING_DAY).unwrap())
        });
    }
    g.finish();
    let kou = typical_instances()
        .into_iter()
        .find(|m| m.family.to_string() == "kou")
        .unwrap();
    c.bench_function("density_from_cf/kou", |b| {
        b.iter(|| density_from_cf(black_box(&kou), TRADING_DAY).unwrap())
    });
}

criterion_group!(benches, surfaces, densities);
criterion_main!(benches);
