use arper_bench::fixture;
use arper_core::exemplar::{score_items, select_herding, select_prioritized};
use arper_core::regularizer::fisher_diagonal;
use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

fn grad_ce(c: &mut Criterion) {
    let mut group = c.benchmark_group("grad_ce");
    for hidden in [32, 128] {
        let f = fixture(50, hidden);
        let ex = &f.data.train[0][0];
        group.bench_with_input(BenchmarkId::from_parameter(hidden), &hidden, |b, _| {
            b.iter(|| f.model.grad_ce(black_box(ex)).unwrap())
        });
    }
    group.finish();
}

fn selection(c: &mut Criterion) {
    let f = fixture(1000, 32);
    let items = &f.stream.tasks[0].train;
    let scores = score_items(&f.model, &f.data.encoder, items, 0.5).unwrap();
    let features: Vec<Vec<f64>> = items
        .iter()
        .map(|u| f.data.encoder.inventory.feature_vector(&u.da).unwrap())
        .collect();
    c.bench_function("select_prioritized/900x250", |b| {
        b.iter(|| select_prioritized(black_box(items), black_box(&scores), 250))
    });
    c.bench_function("select_herding/900x250", |b| {
        b.iter(|| {
            select_herding(
                black_box(items),
                black_box(&features),
                black_box(&scores),
                250,
            )
        })
    });
}

fn fisher(c: &mut Criterion) {
    let f = fixture(100, 32);
    let exemplars = &f.data.train[0][..50];
    c.bench_function("fisher_diagonal/50", |b| {
        b.iter(|| fisher_diagonal(black_box(&f.model), black_box(exemplars)).unwrap())
    });
}

criterion_group!(benches, grad_ce, selection, fisher);
criterion_main!(benches);
