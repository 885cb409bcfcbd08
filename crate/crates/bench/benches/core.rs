use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use pucl_bench::{cloud, net, states};
use pucl_core::classifier::{loss_and_gradient, train, TrainSpec};
use pucl_core::policy::modulation_matrix;
use pucl_core::pulearn::{knn_scores, Metric};

fn knn(c: &mut Criterion) {
    let mut group = c.benchmark_group("knn");
    for &n in &[1_000usize, 10_000] {
        let reference = cloud(n, 3, 0.1);
        let queries = cloud(500, 3, 0.37);
        let r: Vec<&[f64]> = reference.iter().map(|p| p.as_slice()).collect();
        let q: Vec<&[f64]> = queries.iter().map(|p| p.as_slice()).collect();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| knn_scores(black_box(&q), black_box(&r), 1, Metric::Euclidean).unwrap())
        });
    }
    group.finish();
}

fn network(c: &mut Criterion) {
    let n = net(3);
    let x = [0.2, -0.4, 0.1];
    c.bench_function("net/forward", |b| {
        b.iter(|| n.predict(black_box(&x)).unwrap())
    });
    c.bench_function("net/input_gradient", |b| {
        b.iter(|| n.logit_with_gradient(black_box(&x)).unwrap())
    });
    let f = states(&cloud(500, 3, 0.1));
    let i = states(&cloud(500, 3, 0.6));
    c.bench_function("net/loss_and_gradient_1000", |b| {
        b.iter(|| loss_and_gradient(&n, black_box(&f), black_box(&i), 1e-7).unwrap())
    });
    let spec = TrainSpec {
        epochs: 20,
        ..TrainSpec::default()
    };
    c.bench_function("net/train_20_epochs_1000", |b| {
        b.iter(|| {
            let mut m = n.clone();
            train(&mut m, &f, &i, &spec).unwrap()
        })
    });
}

fn modulation(c: &mut Criterion) {
    let n = [0.6, 0.8, 0.0];
    let r = [0.48, 0.86, 0.17];
    c.bench_function("modulation/matrix_3d", |b| {
        b.iter(|| modulation_matrix(black_box(&n), black_box(&r), 4.0).unwrap())
    });
}

criterion_group!(benches, knn, network, modulation);
criterion_main!(benches);
