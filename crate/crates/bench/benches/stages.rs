use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use flowgat_bench::latent_fixture;
use flowgat_core::autodiff::{DenseLayer, ParamStore, Tape};
use flowgat_core::eval::classification_report;
use flowgat_core::gat::{GatArchitecture, GatModel};
use flowgat_core::graph::{build_knn_graph, Metric};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

fn knn(c: &mut Criterion) {
    let mut g = c.benchmark_group("knn_build");
    g.sample_size(10);
    for n in [1000, 4000] {
        let (x, _) = latent_fixture(n, 1);
        for metric in Metric::ALL {
            g.bench_with_input(BenchmarkId::new(metric.to_string(), n), &x, |b, x| {
                b.iter(|| build_knn_graph(black_box(x), 3, metric).unwrap())
            });
        }
    }
    g.finish();
}

fn gat_forward(c: &mut Criterion) {
    let (x, _) = latent_fixture(2000, 2);
    let graph = build_knn_graph(&x, 3, Metric::Euclidean).unwrap();
    let model = GatModel::new(
        GatArchitecture::standard(8, 5),
        &mut ChaCha8Rng::seed_from_u64(0),
    )
    .unwrap();
    c.bench_function("gat_logits_2000", |b| {
        b.iter(|| model.logits(black_box(&graph), &x).unwrap())
    });
}

fn dense(c: &mut Criterion) {
    let (x, _) = latent_fixture(1000, 3);
    let input = x.to_tensor();
    let mut store = ParamStore::new();
    let layer = DenseLayer::new(&mut store, "d", 8, 32, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    c.bench_function("dense_fwd_bwd_1000x8x32", |b| {
        b.iter(|| {
            let mut tape = Tape::new();
            let p = store.bind(&mut tape, true);
            let xv = tape.constant(input.clone());
            let y = layer.forward(&mut tape, &p, xv).unwrap();
            let loss = tape.sum(y);
            tape.backward(loss).unwrap()
        })
    });
}

fn report(c: &mut Criterion) {
    let (_, y) = latent_fixture(10_000, 4);
    let pred: Vec<usize> = y
        .iter()
        .enumerate()
        .map(|(i, &l)| if i % 7 == 0 { (l + 1) % 5 } else { l })
        .collect();
    c.bench_function("classification_report_10000", |b| {
        b.iter(|| classification_report(black_box(&y), &pred, 5).unwrap())
    });
}

criterion_group!(benches, knn, gat_forward, dense, report);
criterion_main!(benches);
