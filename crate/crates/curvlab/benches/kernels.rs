//! Sequential vs rayon executor on the main data-parallel kernels.

use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::Rng;

use curvlab::graph_core::WeightedGraph;
use curvlab::graph_curvature::{bakry_emery_curvature_with, ge_falsify, FalsifyConfig, PencilOptions};
use curvlab::linalg::RMat;
use curvlab::means::Builtin;
use curvlab::optimize::SearchConfig;
use curvlab::par::{task_rng, Executor};
use curvlab::qms_core::depolarizing;
use curvlab::qms_curvature::{be_curvature_qms, ge_falsify_qms, QmsSampleConfig};

const EXECUTORS: [(&str, Executor); 2] = [("sequential", Executor::Sequential), ("parallel", Executor::Parallel)];

fn random_graph(n: usize) -> WeightedGraph {
    let mut rng = task_rng(99, n as u64);
    let mut b = RMat::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            if j == i + 1 || rng.random_bool(0.5) {
                let w = rng.random_range(0.1..1.0);
                b[(i, j)] = w;
                b[(j, i)] = w;
            }
        }
    }
    let m = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
    WeightedGraph::from_weights(m, b).unwrap()
}

fn graph_be(c: &mut Criterion) {
    let mut group = c.benchmark_group("graph_be");
    for n in [8, 12] {
        let g = random_graph(n);
        for (name, exec) in EXECUTORS {
            let opts = PencilOptions { exec, ..Default::default() };
            group.bench_with_input(BenchmarkId::new(name, n), &g, |b, g| {
                b.iter(|| bakry_emery_curvature_with(black_box(g), &opts))
            });
        }
    }
    group.finish();
}

fn graph_ge_falsify(c: &mut Criterion) {
    let mut group = c.benchmark_group("graph_ge_falsify");
    let g = random_graph(10);
    let mean = Builtin::Logarithmic.into();
    for (name, exec) in EXECUTORS {
        // K = −10 never fails here, so every sample is evaluated.
        let cfg = FalsifyConfig { samples: 512, exec, ..Default::default() };
        group.bench_function(name, |b| b.iter(|| ge_falsify(black_box(&g), &mean, -10.0, &cfg).unwrap()));
    }
    group.finish();
}

fn qms_be(c: &mut Criterion) {
    let mut group = c.benchmark_group("qms_be");
    for n in [2, 3] {
        let g = depolarizing(n).unwrap();
        for (name, exec) in EXECUTORS {
            let cfg = SearchConfig { samples: 64, steps: 20, exec, ..Default::default() };
            group.bench_with_input(BenchmarkId::new(name, n), &g, |b, g| {
                b.iter(|| be_curvature_qms(black_box(g), &cfg).unwrap())
            });
        }
    }
    group.finish();
}

fn qms_ge_falsify(c: &mut Criterion) {
    let mut group = c.benchmark_group("qms_ge_falsify");
    let g = depolarizing(2).unwrap();
    let mean = Builtin::Logarithmic.into();
    for (name, exec) in EXECUTORS {
        let cfg = QmsSampleConfig { samples: 256, exec, ..Default::default() };
        group.bench_function(name, |b| b.iter(|| ge_falsify_qms(black_box(&g), &mean, 1.0, &cfg).unwrap()));
    }
    group.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10).measurement_time(Duration::from_secs(3));
    targets = graph_be, graph_ge_falsify, qms_be, qms_ge_falsify
}
criterion_main!(benches);
