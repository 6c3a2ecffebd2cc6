use std::collections::HashMap;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Zipf};

use reprir::analysis::Analyzer;
use reprir::encoders::dense::DenseStore;
use reprir::encoders::sparse::Bm25Params;
use reprir::encoders::Document;
use reprir::model::{LogicalScoringModel, TermWeighting};
use reprir::physical::brute::BruteForceIndex;
use reprir::physical::cross::{build_backend, BackendConfig, BackendKind};
use reprir::physical::hnsw::{HnswIndex, HnswParams};
use reprir::physical::SearchBudget;
use reprir::{ComparisonFunction, Execution, Repr};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn zipf_docs(rng: &mut ChaCha8Rng, prefix: &str, n: usize, vocab: u64, len: std::ops::Range<usize>) -> Vec<Document> {
    let z = Zipf::new(vocab, 1.0).unwrap();
    (0..n)
        .map(|i| {
            let l = rng.gen_range(len.clone());
            let text: Vec<String> = (0..l).map(|_| format!("t{}", z.sample(rng) as u64)).collect();
            Document::new(format!("{prefix}{i}"), text.join(" "))
        })
        .collect()
}

fn gaussian_store(rng: &mut ChaCha8Rng, prefix: &str, n: usize, dim: usize) -> DenseStore {
    let mut s = DenseStore::new(dim).unwrap();
    for i in 0..n {
        let row: Vec<f32> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        s.push(format!("{prefix}{i}"), &row).unwrap();
    }
    s
}

fn bm25(docs: &[Document]) -> LogicalScoringModel {
    LogicalScoringModel::unsupervised_sparse(
        docs,
        Analyzer::default(),
        TermWeighting::Bm25(Bm25Params::default()),
        HashMap::new(),
        Execution::Parallel,
    )
    .unwrap()
}

fn corpus_encoding(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let docs = zipf_docs(&mut rng, "d", 20_000, 20_000, 50..150);
    let model = bm25(&docs);
    let mut g = c.benchmark_group("encode_corpus_bm25");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| model.encode_documents(&docs, exec).unwrap()));
    }
    g.finish();
}

fn brute_force_batch(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let docs = gaussian_store(&mut rng, "d", 20_000, 64);
    let queries = gaussian_store(&mut rng, "q", 200, 64);
    let reprs: Vec<(String, Repr)> = (0..docs.len()).map(|i| (docs.ids()[i].clone(), Repr::Dense(docs.vector(i)))).collect();
    let index = BruteForceIndex::build(reprs, ComparisonFunction::InnerProduct).unwrap();
    let qs: Vec<(String, Repr)> = (0..queries.len()).map(|i| (queries.ids()[i].clone(), Repr::Dense(queries.vector(i)))).collect();
    let budget = SearchBudget::new(10).unwrap();
    let mut g = c.benchmark_group("brute_force_batch_dense64");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| index.search_batch(&qs, &budget, exec).unwrap()));
    }
    g.finish();
}

fn daat_batch(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let docs = zipf_docs(&mut rng, "d", 50_000, 20_000, 20..120);
    let queries = zipf_docs(&mut rng, "q", 500, 2_000, 2..6);
    let model = bm25(&docs);
    let encoded = model.encode_documents(&docs, Execution::Parallel).unwrap();
    let budget = SearchBudget::new(10).unwrap();
    let qs: Vec<(String, Repr)> = queries.iter().map(|q| (q.id.clone(), model.encode_query(q).unwrap())).collect();
    for kind in [BackendKind::InvertedDaat, BackendKind::InvertedMaxScore] {
        let backend = build_backend(&model, &BackendConfig::new(kind), encoded.clone()).unwrap();
        let mut g = c.benchmark_group(format!("{}_batch_bm25", kind.name()));
        g.sample_size(10);
        for (name, exec) in MODES {
            g.bench_function(BenchmarkId::from_parameter(name), |b| {
                b.iter(|| exec.try_map(&qs, |(id, q)| backend.search(id, q, &budget)).unwrap())
            });
        }
        g.finish();
    }
}

fn hnsw_batch(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let docs = gaussian_store(&mut rng, "d", 10_000, 32);
    let queries = gaussian_store(&mut rng, "q", 500, 32);
    let index = HnswIndex::build(&docs, HnswParams { ef_construction: 100, ..Default::default() }).unwrap();
    let qs: Vec<_> = (0..queries.len()).map(|i| (queries.ids()[i].clone(), queries.vector(i))).collect();
    let budget = SearchBudget::with_ef(10, 100).unwrap();
    let mut g = c.benchmark_group("hnsw_batch_dense32");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| index.search_batch(&qs, &budget, exec).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, corpus_encoding, brute_force_batch, daat_batch, hnsw_batch);
criterion_main!(benches);
