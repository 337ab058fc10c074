use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use mmbio_core::backend::{fingerprint_features, iris_features, match_fingerprints, match_irises, Backend};
use mmbio_core::config::RunConfig;
use mmbio_core::fp_enhance::{estimate_orientation, normalize, oriented_filter};
use mmbio_core::hwmodel::pipeline::{equal_cost_chain, run_pipeline, Row};
use mmbio_core::hwmodel::ExecMode;
use mmbio_core::synth::{generate, DatasetSpec};
use mmbio_core::GrayImage;

fn samples() -> (Vec<GrayImage>, Vec<GrayImage>) {
    let spec = DatasetSpec {
        subjects: 2,
        ..DatasetSpec::default()
    };
    let subjects = generate(&spec);
    let fps = subjects.iter().map(|s| s.fingerprints[0].clone()).collect();
    let eyes = subjects.iter().map(|s| s.eyes[0].clone()).collect();
    (fps, eyes)
}

fn backends() -> [(Backend, &'static str); 2] {
    [(Backend::Reference, "reference"), (Backend::HardwareModel, "hardware-model")]
}

fn enhancement(c: &mut Criterion) {
    let (fps, _) = samples();
    let cfg = RunConfig::default();
    let norm = normalize(&fps[0], &cfg.filter);
    let field = estimate_orientation(&norm, &cfg.filter);
    c.bench_function("oriented_filter/256", |b| {
        b.iter(|| oriented_filter(black_box(&norm), &field, &cfg.filter))
    });
}

fn features(c: &mut Criterion) {
    let (fps, eyes) = samples();
    let cfg = RunConfig::default();
    let mut g = c.benchmark_group("features");
    g.sample_size(10);
    for (backend, name) in backends() {
        g.bench_with_input(BenchmarkId::new("fingerprint", name), &fps[0], |b, img| {
            b.iter(|| fingerprint_features(img, &cfg, backend).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("iris", name), &eyes[0], |b, img| {
            b.iter(|| iris_features(img, &cfg, backend).unwrap())
        });
    }
    g.finish();
}

fn matching(c: &mut Criterion) {
    let (fps, eyes) = samples();
    let cfg = RunConfig::default();
    let m: Vec<_> = fps
        .iter()
        .map(|f| fingerprint_features(f, &cfg, Backend::Reference).unwrap())
        .collect();
    let codes: Vec<_> = eyes
        .iter()
        .map(|e| iris_features(e, &cfg, Backend::Reference).unwrap())
        .collect();
    for (backend, name) in backends() {
        c.bench_function(&format!("match_fingerprints/{name}"), |b| {
            b.iter(|| match_fingerprints(black_box(&m[0]), &m[1], &cfg, backend))
        });
    }
    c.bench_function("hamming/rotations", |b| {
        b.iter(|| match_irises(black_box(&codes[0]), &codes[1], &cfg).unwrap())
    });
}

fn pipelining(c: &mut Criterion) {
    let input: Vec<Row> = (0..512)
        .map(|y| Row::new(y, vec![(0..512).map(|x| ((x * 7 + y * 13) % 256) as i32).collect()]))
        .collect();
    let mut g = c.benchmark_group("equal_cost_chain/512");
    g.sample_size(10);
    for (mode, name) in [(ExecMode::Sequential, "sequential"), (ExecMode::Pipelined, "pipelined")] {
        g.bench_function(name, |b| {
            b.iter(|| run_pipeline(equal_cost_chain(4, 24), input.clone(), mode, 2).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, enhancement, features, matching, pipelining);
criterion_main!(benches);
