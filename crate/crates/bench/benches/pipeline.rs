use std::hint::black_box;

use argannot_bench::arrow_workload;
use argannot_core::correspondence::correspond_corpus;
use argannot_core::metrics::report_from_tags;
use argannot_core::training::{loss_and_gradients, predict_example};
use argannot_core::{stream_document, Rater, SchemeId, TagId, TagSet, Vocab};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn tokenizer(c: &mut Criterion) {
    let w = arrow_workload(40, 16, 32);
    let texts: Vec<&str> = w.docs.iter().map(|d| d.text.as_str()).collect();
    c.bench_function("vocab_train_500", |b| {
        b.iter(|| Vocab::train(black_box(&texts), 500).unwrap())
    });
    let words: Vec<&str> = texts.iter().flat_map(|t| t.split_whitespace()).collect();
    c.bench_function("encode_words", |b| {
        b.iter(|| w.vocab.encode_words(black_box(&words)))
    });
}

fn encoder(c: &mut Criterion) {
    let mut g = c.benchmark_group("encoder");
    for width in [16, 32, 64] {
        let w = arrow_workload(4, width, 64);
        let ex = &w.examples[0];
        g.bench_with_input(
            BenchmarkId::new("stream_document", width),
            &width,
            |b, _| b.iter(|| stream_document(&w.params, black_box(&ex.input_ids)).unwrap()),
        );
        g.bench_with_input(
            BenchmarkId::new("loss_and_gradients", width),
            &width,
            |b, _| b.iter(|| loss_and_gradients(&w.params, black_box(ex)).unwrap()),
        );
        g.bench_with_input(
            BenchmarkId::new("predict_example", width),
            &width,
            |b, _| b.iter(|| predict_example(&w.params, black_box(ex)).unwrap()),
        );
    }
    g.finish();
}

fn metrics(c: &mut Criterion) {
    let ts = TagSet::builtin(SchemeId::Persuade);
    let tags = ts.labels();
    let pred: Vec<TagId> = (0..10_000)
        .map(|i| tags[(i * 7 + i / 3) % tags.len()].clone())
        .collect();
    let gold: Vec<TagId> = (0..10_000)
        .map(|i| tags[(i * 5 + i / 11) % tags.len()].clone())
        .collect();
    c.bench_function("report_10k_words", |b| {
        b.iter(|| report_from_tags(black_box(&pred), black_box(&gold), &ts, "words").unwrap())
    });

    let w = arrow_workload(40, 16, 32);
    let arrow = TagSet::builtin(SchemeId::Arrow);
    c.bench_function("correspond_40_docs", |b| {
        b.iter(|| {
            correspond_corpus(
                black_box(&w.docs),
                (&arrow, Some(Rater::Human1)),
                (&arrow, None),
            )
            .unwrap()
        })
    });
}

criterion_group!(benches, tokenizer, encoder, metrics);
criterion_main!(benches);
