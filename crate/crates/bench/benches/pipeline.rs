use criterion::{black_box, criterion_group, criterion_main, Criterion};
use diskel::harness::database_config;
use diskel::harness::generate::{generate_shape, Prototype, ShapeSpec};
use diskel::matching::shape_similarity;
use diskel::surface::solve_phi;
use diskel::{extract, MatchMode, PhiConfig, SimilarityWeights};

fn pipeline(c: &mut Criterion) {
    let hand = generate_shape(&ShapeSpec::new(Prototype::Hand), 1).unwrap();
    let bent = generate_shape(
        &ShapeSpec {
            articulation: 0.5,
            ..ShapeSpec::new(Prototype::Hand)
        },
        2,
    )
    .unwrap();
    let cfg = database_config();

    c.bench_function("solve_phi hand", |b| {
        b.iter(|| solve_phi(black_box(&hand), &PhiConfig::default()).unwrap())
    });
    c.bench_function("extract hand", |b| b.iter(|| extract(black_box(&hand), &cfg).unwrap()));

    let a = extract(&hand, &cfg).unwrap().descriptors;
    let d = extract(&bent, &cfg).unwrap().descriptors;
    let w = SimilarityWeights::default();
    c.bench_function("match hand pair", |b| {
        b.iter(|| shape_similarity(black_box(&a), black_box(&d), &w, &MatchMode::Invariant))
    });
}

criterion_group!(benches, pipeline);
criterion_main!(benches);
