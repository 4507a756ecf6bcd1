use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ledgerscan::features::compute::DENSE_FEATURE_COUNT;
use ledgerscan::features::lexicon::Lexicons;
use ledgerscan::ingest::synth::{generate_corpus_with, CorpusSpec};
use ledgerscan::par::{self, Exec};
use ledgerscan::seq::train::batch_gradient;
use ledgerscan::seq::{build_word_inputs, FeatureStats, Params, SeqDims, SeqExample};
use std::hint::black_box;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn corpus_spec() -> CorpusSpec {
    CorpusSpec { num_templates: 10, docs_per_template: [4, 4], seed: 9, ..CorpusSpec::default() }
}

fn generation(c: &mut Criterion) {
    let spec = corpus_spec();
    let mut g = c.benchmark_group("generate");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| generate_corpus_with(black_box(&spec), exec).unwrap()));
    }
    g.finish();
}

fn features(c: &mut Criterion) {
    let corpus = generate_corpus_with(&corpus_spec(), Exec::Parallel).unwrap();
    let lex = Lexicons::builtin();
    let stats = FeatureStats::identity(DENSE_FEATURE_COUNT);
    let mut g = c.benchmark_group("word_inputs");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| par::map(exec, &corpus, |p| build_word_inputs(&p.doc, lex, &stats, 18)))
        });
    }
    g.finish();
}

fn gradient(c: &mut Criterion) {
    let corpus = generate_corpus_with(&corpus_spec(), Exec::Parallel).unwrap();
    let lex = Lexicons::builtin();
    let dims = SeqDims { hash_bits: 14, ..SeqDims::desk() };
    let stats = FeatureStats::identity(dims.numeric);
    let params = Params::init(&dims, 1).unwrap();
    let examples: Vec<SeqExample> = corpus
        .iter()
        .take(16)
        .map(|p| {
            let inputs = build_word_inputs(&p.doc, lex, &stats, dims.hash_bits);
            let targets = vec![0.0; inputs.len() * dims.tags];
            SeqExample { inputs, targets }
        })
        .collect();
    let batch: Vec<(usize, &SeqExample)> = examples.iter().enumerate().collect();
    let mut g = c.benchmark_group("batch_gradient");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| batch_gradient(&params, black_box(&batch), 1, 0, exec).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, generation, features, gradient);
criterion_main!(benches);
