use criterion::{black_box, criterion_group, criterion_main, Criterion};

use recmix_core::harness::{diagnose, evaluate, train, TrainConfig};
use recmix_core::{mix, Corpus, CorpusConfig, MixupStrategy};

fn small_corpus() -> CorpusConfig {
    CorpusConfig {
        source_pairs: 400,
        target_recipes: 300,
        target_test_pairs: 200,
        ..Default::default()
    }
}

fn quick_train() -> TrainConfig {
    TrainConfig {
        epochs: 1,
        ..Default::default()
    }
}

fn corpus_generation(c: &mut Criterion) {
    let config = small_corpus();
    c.bench_function("corpus_generate", |b| b.iter(|| Corpus::generate(black_box(&config)).unwrap()));
}

fn mixing(c: &mut Criterion) {
    let corpus = Corpus::generate(&small_corpus()).unwrap();
    let source: Vec<_> = corpus.source_pairs().iter().take(32).map(|r| r.features.clone()).collect();
    let target: Vec<_> = corpus.target_train().iter().take(32).map(|r| r.translated.clone().unwrap()).collect();
    c.bench_function("mix_rm4_batch32", |b| {
        b.iter(|| mix(black_box(&source), black_box(&target), MixupStrategy::Rm4).unwrap())
    });
}

fn training_epoch(c: &mut Criterion) {
    let corpus = Corpus::generate(&small_corpus()).unwrap();
    let config = quick_train();
    let mut group = c.benchmark_group("train");
    group.sample_size(10);
    group.bench_function("one_epoch_rm_s", |b| b.iter(|| train(black_box(&config), &corpus).unwrap()));
    group.finish();
}

fn evaluation(c: &mut Criterion) {
    let corpus = Corpus::generate(&small_corpus()).unwrap();
    let params = train(&quick_train(), &corpus).unwrap().checkpoint.params;
    c.bench_function("evaluate_q100_t5", |b| {
        b.iter(|| evaluate(black_box(&params), &corpus, 100, 5, 7).unwrap())
    });
    c.bench_function("diagnose_n100", |b| b.iter(|| diagnose(black_box(&params), &corpus, 100, 7).unwrap()));
}

criterion_group!(benches, corpus_generation, mixing, training_epoch, evaluation);
criterion_main!(benches);
