use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use newsaudit::audit::SyntheticKind;
use newsaudit::features::{pmi_by_label, TextField, VocabParams, Vocabulary};
use newsaudit::probe::{train_probe, TrainParams};
use newsaudit::simdist::{coral_distance, mmd_distance, sim_score};
use newsaudit::splits::{random_split, source_split};
use newsaudit::{DistanceKind, Label};
use newsaudit_bench::{corpus, site_set, site_sets};

fn distances(c: &mut Criterion) {
    let mut group = c.benchmark_group("distance");
    for n in [50, 200] {
        let a = site_set("a", Label::Reliable, n, 32, 1);
        let b = site_set("b", Label::Unreliable, n, 32, 2);
        group.bench_with_input(BenchmarkId::new("mmd", n), &n, |bench, _| {
            bench.iter(|| mmd_distance(black_box(&a), black_box(&b), 1.0).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("coral", n), &n, |bench, _| {
            bench.iter(|| coral_distance(black_box(&a), black_box(&b)).unwrap())
        });
    }
    group.finish();

    let train = site_sets(20, 50, 16);
    let site = site_set("eval", Label::Reliable, 50, 16, 99);
    let mut group = c.benchmark_group("sim_score");
    for kind in DistanceKind::ALL {
        group.bench_function(kind.name(), |bench| bench.iter(|| sim_score(black_box(&site), &train, kind).unwrap()));
    }
    group.finish();
}

fn pipeline(c: &mut Criterion) {
    let corpus = corpus(SyntheticKind::Mixed, 40, 50);
    let titles: Vec<String> = corpus.articles().iter().map(|a| a.title.clone()).collect();

    let mut group = c.benchmark_group("pipeline");
    group.sample_size(20);
    group.bench_function("vocabulary_fit", |b| {
        b.iter(|| Vocabulary::fit(black_box(&titles), TextField::Title, 2, 50_000).unwrap())
    });
    group.bench_function("random_split", |b| b.iter(|| random_split(black_box(&corpus), [0.8, 0.1, 0.1], 1).unwrap()));
    group.bench_function("source_split", |b| b.iter(|| source_split(black_box(&corpus), [0.8, 0.1, 0.1], 1).unwrap()));
    group.bench_function("train_probe", |b| {
        b.iter(|| train_probe(black_box(corpus.articles()), &VocabParams::default(), &TrainParams::default()).unwrap())
    });
    let vocab = Vocabulary::fit(&titles, TextField::Title, 2, 50_000).unwrap();
    group.bench_function("pmi_by_label", |b| b.iter(|| pmi_by_label(black_box(corpus.articles()), &vocab).unwrap()));
    group.finish();
}

criterion_group!(benches, distances, pipeline);
criterion_main!(benches);
