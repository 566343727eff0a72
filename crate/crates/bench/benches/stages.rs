use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use pseudoalign::neural::softmax_ce;
use pseudoalign::*;

fn spec(seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        classes: 4,
        domains_per_class: 3,
        samples_per_class: 300,
        dim: 16,
        class_separation: 8.0,
        domain_spread: 3.0,
        noise_sigma: 1.5,
        seed,
    }
}

fn clustering(c: &mut Criterion) {
    let ds = synthesize(&spec(0)).unwrap();
    let cfg = KMeansConfig {
        k: 4,
        seed: 0,
        ..Default::default()
    };
    c.bench_function("kmeans 1200x16 k=4", |b| {
        b.iter(|| kmeans(black_box(&ds), &cfg).unwrap())
    });
    let cm = kmeans(&ds, &cfg).unwrap();
    c.bench_function("centroid_topk 100", |b| {
        b.iter(|| centroid_topk(&cm, black_box(&ds), 100).unwrap())
    });
}

fn mlp(c: &mut Criterion) {
    let mut rng = seeded_rng(0, 0);
    let net = Mlp::new(&[16, 64, 32], &mut rng);
    let ds = synthesize(&spec(1)).unwrap();
    let x = ds.features().slice(ndarray::s![..64, ..]).to_owned();
    let labels: Vec<usize> = (0..64).map(|i| i % 32).collect();
    c.bench_function("mlp forward 64x16", |b| {
        b.iter(|| net.forward(black_box(x.view())).unwrap())
    });
    c.bench_function("mlp forward+backward 64x16", |b| {
        b.iter(|| {
            let (out, tape) = net.forward_taped(black_box(x.view())).unwrap();
            let (_, g) = softmax_ce(out.view(), &labels, None).unwrap();
            tape.backward(&net, g.view())
        })
    });
}

fn dam(c: &mut Criterion) {
    let ds = select_labeled_subset(&synthesize(&spec(2)).unwrap(), 10, 2).unwrap();
    let cm = kmeans(
        &ds,
        &KMeansConfig {
            k: 4,
            seed: 2,
            ..Default::default()
        },
    )
    .unwrap();
    let conf = centroid_topk(&cm, &ds, 100).unwrap();
    let split = split_domains(&conf, SplitStrategy::Random, 0.8, 2).unwrap();
    let cfg = DamTrainConfig {
        epochs: 1,
        seed: 2,
        ..Default::default()
    };
    c.bench_function("dam one epoch", |b| {
        b.iter(|| train_dam(&ds, &split, black_box(&cfg)).unwrap())
    });
}

criterion_group!(benches, clustering, mlp, dam);
criterion_main!(benches);
