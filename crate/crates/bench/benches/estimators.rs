use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use ssofr_bench::fixture;
use ssofr_core::{fpc, fpls, m_fit, ml_fit, rfpc, rfpls, HampelConfig, MInit, MScaleConfig, MTuning, SarDesign};

fn decompositions(c: &mut Criterion) {
    let f = fixture(10, 20, 12, 1);
    let mut g = c.benchmark_group("decomposition_n200_m12_k4");
    g.bench_function("fpc", |b| b.iter(|| fpc(black_box(&f.coeffs), &f.basis, 4).unwrap()));
    g.bench_function("fpls", |b| b.iter(|| fpls(black_box(&f.coeffs), &f.basis, &f.y, 4).unwrap()));
    g.sample_size(10);
    g.bench_function("rfpc", |b| {
        b.iter(|| rfpc(black_box(&f.coeffs), &f.basis, 4, &MScaleConfig::default()).unwrap())
    });
    g.bench_function("rfpls", |b| {
        b.iter(|| rfpls(black_box(&f.coeffs), &f.basis, &f.y, 4, &HampelConfig::default()).unwrap())
    });
    g.finish();
}

fn sar(c: &mut Criterion) {
    let f = fixture(10, 20, 12, 1);
    let dec = fpc(&f.coeffs, &f.basis, 4).unwrap();
    let design = SarDesign::from_scores(f.y.clone(), &dec.scores, &f.sim.weights).unwrap();
    let mut g = c.benchmark_group("sar_n200_k4");
    g.bench_function("ml_fit", |b| b.iter(|| ml_fit(black_box(&design)).unwrap()));
    g.sample_size(10);
    g.bench_function("m_fit", |b| {
        b.iter(|| m_fit(black_box(&design), &MTuning::default(), MInit::MaximumLikelihood).unwrap())
    });
    g.finish();
}

criterion_group!(benches, decompositions, sar);
criterion_main!(benches);
