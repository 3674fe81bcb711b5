use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use kmpn_bench::fixture;
use kmpn_core::model::{entity_forward, full_embeddings};
use kmpn_core::objectives::soft_dcorr_loss;
use kmpn_core::train::{kmpn_batch_objective, KmpnObjective};
use kmpn_core::{evaluate_kmpn, LossWeights, Matrix, ReciprocalSampler, Split, DEFAULT_KS};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn model(c: &mut Criterion) {
    let f = fixture(256);
    let ds = &f.dataset;
    let obj = KmpnObjective {
        graph: &ds.kg,
        interactions: &ds.interactions,
        weights: LossWeights::default(),
        content: None,
    };
    c.bench_function("entity_forward", |b| b.iter(|| entity_forward(black_box(&f.params), &ds.kg).unwrap()));
    c.bench_function("batch_objective_forward", |b| {
        b.iter(|| kmpn_batch_objective(&obj, black_box(&f.params), &f.batch, None, false).unwrap())
    });
    c.bench_function("batch_objective_with_grads", |b| {
        b.iter(|| kmpn_batch_objective(&obj, black_box(&f.params), &f.batch, None, true).unwrap())
    });
    c.bench_function("full_embeddings", |b| {
        b.iter(|| full_embeddings(black_box(&f.params), &ds.kg, &ds.interactions).unwrap())
    });
    c.bench_function("evaluate_test_split", |b| {
        b.iter(|| evaluate_kmpn(black_box(&f.params), &ds.kg, &ds.interactions, Split::Test, &DEFAULT_KS).unwrap())
    });
}

fn parts(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pref = Matrix::uniform(8, 64, -1.0, 1.0, &mut rng);
    c.bench_function("soft_dcorr_8x64", |b| b.iter(|| soft_dcorr_loss(black_box(&pref), 0.5).unwrap()));
    let counts: Vec<usize> = (0..10_000).map(|i| 1 + i % 97).collect();
    let sampler = ReciprocalSampler::from_counts(&counts).unwrap();
    let positives: Vec<usize> = (0..10_000).step_by(50).collect();
    c.bench_function("sample_negative_10k", |b| {
        b.iter(|| sampler.sample_excluding(black_box(&positives), &mut rng).unwrap())
    });
}

criterion_group!(benches, model, parts);
criterion_main!(benches);
