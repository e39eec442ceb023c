use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use comclust::graph::UnitRows;
use comclust::merging::score_candidates;
use comclust::refine::{loss_and_grad, RefineBatch, Rows};
use comclust::seeding::kmeans_with;
use comclust::{generate_blobs, Community, Parallelism, RunConfig};

const MODES: [(&str, Parallelism); 2] = [("sequential", Parallelism::Sequential), ("parallel", Parallelism::Parallel)];

fn graph_build(c: &mut Criterion) {
    let data = generate_blobs(5, 2000, 16, 0.45, 0).unwrap();
    let unit = UnitRows::new(&data);
    let subset: Vec<usize> = (0..data.len()).collect();
    let mut group = c.benchmark_group("graph_build");
    for (name, mode) in MODES {
        group.bench_function(BenchmarkId::new(name, 2000), |b| {
            b.iter(|| unit.build_graph(black_box(&subset), 0.5, mode).unwrap())
        });
    }
    group.finish();
}

fn candidate_scoring(c: &mut Criterion) {
    let data = generate_blobs(5, 2000, 16, 0.45, 1).unwrap();
    let unit = UnitRows::new(&data);
    let mains: Vec<Community> = (0..5)
        .map(|m| Community::new(m, (m..1000).step_by(5).collect()).unwrap())
        .collect();
    let isolated: Vec<Community> = (0..40)
        .map(|i| Community::new(i, (1000 + i..2000).step_by(40).collect()).unwrap())
        .collect();
    let cfg = RunConfig::new(5);
    let mut group = c.benchmark_group("candidate_scoring");
    for (name, mode) in MODES {
        group.bench_function(BenchmarkId::new(name, "5x40"), |b| {
            b.iter(|| score_candidates(&data, &unit, black_box(&mains), &isolated, &cfg, 7, mode))
        });
    }
    group.finish();
}

fn infonce_gradient(c: &mut Criterion) {
    let data = generate_blobs(4, 512, 16, 0.3, 2).unwrap();
    let anchors: Vec<usize> = (0..64).collect();
    let positives: Vec<usize> = anchors.iter().map(|a| a + 64).collect();
    let negatives: Vec<Vec<usize>> = anchors
        .iter()
        .map(|&a| anchors.iter().copied().filter(|&b| b % 4 != a % 4).collect())
        .collect();
    let batch = RefineBatch::new(anchors, positives, negatives).unwrap();
    let mut group = c.benchmark_group("infonce_gradient");
    for (name, mode) in MODES {
        group.bench_function(BenchmarkId::new(name, 64), |b| {
            b.iter(|| loss_and_grad(Rows::from(&data), black_box(&batch), 0.5, mode).unwrap())
        });
    }
    group.finish();
}

fn kmeans(c: &mut Criterion) {
    let data = generate_blobs(5, 2000, 16, 0.45, 3).unwrap();
    let mut group = c.benchmark_group("kmeans");
    group.sample_size(20);
    for (name, mode) in MODES {
        group.bench_function(BenchmarkId::new(name, 2000), |b| {
            b.iter(|| kmeans_with(black_box(&data), 5, 0, mode).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, graph_build, candidate_scoring, infonce_gradient, kmeans);
criterion_main!(benches);
