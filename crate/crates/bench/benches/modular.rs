use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use modmark_core::generators::{generate, modular_twirl, GenKind, GenSpec};
use modmark_core::numsub::herm_eig;
use modmark_core::verify::{InstanceInfo, SuiteConfig, VerifyConfig};
use modmark_core::{run_suite, verify_channel, Complex64, ModularData};

const DIMS: [&[usize]; 3] = [&[2], &[4], &[3, 1]];

fn label(d: &[usize]) -> String {
    d.iter().map(|n| n.to_string()).collect::<Vec<_>>().join("+")
}

fn numerics(c: &mut Criterion) {
    let mut g = c.benchmark_group("numerics");
    for d in DIMS {
        let ch = generate(&GenSpec::new(GenKind::Schur, d.to_vec(), 1)).unwrap().channel;
        let md = ModularData::new(ch.source()).unwrap();
        let density = ch.source().density().block(0).clone();
        g.bench_with_input(BenchmarkId::new("herm_eig", label(d)), &density, |b, m| {
            b.iter(|| herm_eig(black_box(m)).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("delta_power_matrix", label(d)), &md, |b, md| {
            b.iter(|| md.delta_power_matrix(black_box(Complex64::new(0.5, 2.0))).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("check_markov", label(d)), &ch, |b, ch| {
            b.iter(|| black_box(ch).check_markov())
        });
    }
    g.finish();
}

fn generators(c: &mut Criterion) {
    let mut g = c.benchmark_group("generators");
    g.sample_size(20);
    for d in DIMS {
        let spec = GenSpec::new(GenKind::SpUcp, d.to_vec(), 3);
        g.bench_with_input(BenchmarkId::new("sp_ucp", label(d)), &spec, |b, s| {
            b.iter(|| generate(black_box(s)).unwrap())
        });
        let raw = generate(&spec).unwrap().channel;
        g.bench_with_input(BenchmarkId::new("twirl", label(d)), &raw, |b, ch| {
            b.iter(|| modular_twirl(black_box(ch)).unwrap())
        });
    }
    g.finish();
}

fn verification(c: &mut Criterion) {
    let mut g = c.benchmark_group("verify");
    let cfg = VerifyConfig::default();
    for d in DIMS {
        let ch = generate(&GenSpec::new(GenKind::Convex, d.to_vec(), 5)).unwrap().channel;
        let info = InstanceInfo::for_channel("bench", &ch);
        g.bench_with_input(BenchmarkId::new("verify_channel", label(d)), &ch, |b, ch| {
            b.iter(|| verify_channel(black_box(ch), info.clone(), &cfg).unwrap())
        });
    }
    g.sample_size(10);
    let suite = SuiteConfig {
        trials: 40,
        dims: DIMS.iter().map(|d| d.to_vec()).collect(),
        seed: 42,
        kinds: GenKind::ALL.iter().copied().filter(|k| k.is_markov()).collect(),
        verify: cfg.clone(),
    };
    g.bench_function("suite_40", |b| b.iter(|| run_suite(black_box(&suite)).unwrap()));
    g.finish();
}

criterion_group!(benches, numerics, generators, verification);
criterion_main!(benches);
