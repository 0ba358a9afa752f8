use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use opfreq::classic::ClassifierKind;
use opfreq::cluster::kmeans_best_of;
use opfreq::eval::roc_auc;
use opfreq::reduce::fit_pca;
use opfreq::{parse_dex, parse_smali};
use opfreq_bench::{corpus, synthetic_dex, synthetic_smali};

fn parsers(c: &mut Criterion) {
    let mut g = c.benchmark_group("parse");
    for methods in [10, 100] {
        let bytes = synthetic_dex(methods, 1000, 1);
        g.bench_with_input(BenchmarkId::new("dex", methods), &bytes, |b, bytes| {
            b.iter(|| parse_dex(black_box(bytes)).unwrap())
        });
    }
    let text = synthetic_smali(20_000, 1);
    g.bench_function("smali/20k", |b| b.iter(|| parse_smali(black_box(&text))));
    g.finish();
}

fn learners(c: &mut Criterion) {
    let m = corpus(250, 1);
    let mut g = c.benchmark_group("fit");
    g.sample_size(10);
    for kind in [ClassifierKind::Dt, ClassifierKind::Rf] {
        g.bench_function(kind.name(), |b| b.iter(|| kind.fit(black_box(&m), 1).unwrap()));
    }
    g.bench_function("PCA-15", |b| b.iter(|| fit_pca(black_box(&m), 15).unwrap()));
    g.bench_function("kmeans-k2x10", |b| {
        b.iter(|| kmeans_best_of(black_box(&m.data), 2, 1, 10).unwrap())
    });
    g.finish();
}

fn scoring(c: &mut Criterion) {
    let m = corpus(2000, 2);
    let scores: Vec<f64> = m.data.column(0).to_vec();
    c.bench_function("auc/4000", |b| {
        b.iter(|| roc_auc(black_box(&m.labels), black_box(&scores)).unwrap())
    });
}

criterion_group!(benches, parsers, learners, scoring);
criterion_main!(benches);
