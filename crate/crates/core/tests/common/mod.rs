#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Zipf};

use reprir::encoders::dense::DenseStore;
use reprir::encoders::Document;
use reprir::eval::Qrels;
use reprir::trainer::TrainInstance;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Token ranks drawn from a Zipf(1.0) law over `vocab` terms, rendered "t<rank>".
pub fn zipf_text(rng: &mut ChaCha8Rng, vocab: usize, len: usize) -> String {
    let z = Zipf::new(vocab as u64, 1.0).unwrap();
    (0..len).map(|_| format!("t{}", z.sample(rng) as u64)).collect::<Vec<_>>().join(" ")
}

pub fn zipf_corpus(rng: &mut ChaCha8Rng, n: usize, vocab: usize, len: std::ops::Range<usize>) -> Vec<Document> {
    (0..n)
        .map(|i| {
            let l = rng.gen_range(len.clone());
            Document::new(format!("d{i}"), zipf_text(rng, vocab, l))
        })
        .collect()
}

pub fn zipf_queries(rng: &mut ChaCha8Rng, n: usize, vocab: usize, len: std::ops::Range<usize>) -> Vec<Document> {
    (0..n)
        .map(|i| {
            let l = rng.gen_range(len.clone());
            Document::new(format!("q{i}"), zipf_text(rng, vocab, l))
        })
        .collect()
}

pub fn gaussian_rows(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f32>> {
    (0..n).map(|_| (0..dim).map(|_| StandardNormal.sample(rng)).collect()).collect()
}

pub fn store(prefix: &str, rows: &[Vec<f32>]) -> DenseStore {
    let mut s = DenseStore::new(rows[0].len()).unwrap();
    for (i, r) in rows.iter().enumerate() {
        s.push(format!("{prefix}{i}"), r).unwrap();
    }
    s
}

/// Documents carry one of `markers` marker tokens plus noise; each query
/// carries a marker plus noise and is relevant to every document sharing it.
pub struct MarkerTask {
    pub docs: Vec<Document>,
    pub queries: Vec<Document>,
    pub qrels: Qrels,
    pub train: Vec<TrainInstance>,
}

#[derive(Clone, Copy)]
pub struct MarkerShape {
    pub docs: usize,
    pub markers: usize,
    pub queries_per_marker: usize,
    pub noise_vocab: usize,
    pub doc_noise: usize,
    pub query_noise: usize,
}

pub fn marker_task(seed: u64, shape: &MarkerShape) -> MarkerTask {
    let MarkerShape { docs: n_docs, markers, queries_per_marker, noise_vocab, doc_noise, query_noise } = *shape;
    let mut r = rng(seed);
    let noise = |r: &mut ChaCha8Rng, n: usize| -> Vec<String> { (0..n).map(|_| format!("n{}", r.gen_range(0..noise_vocab))).collect() };
    let mut docs = Vec::new();
    let mut doc_tokens = Vec::new();
    for i in 0..n_docs {
        let m = i % markers;
        let mut toks = noise(&mut r, doc_noise);
        toks.insert(r.gen_range(0..=toks.len()), format!("m{m}"));
        docs.push(Document::new(format!("d{i}"), toks.join(" ")));
        doc_tokens.push((m, toks));
    }
    let mut queries = Vec::new();
    let mut qrels = Qrels::new();
    for m in 0..markers {
        for j in 0..queries_per_marker {
            let mut toks = noise(&mut r, query_noise);
            toks.insert(r.gen_range(0..=toks.len()), format!("m{m}"));
            let qid = format!("q{m}_{j}");
            queries.push(Document::new(qid.clone(), toks.join(" ")));
            for (i, (dm, _)) in doc_tokens.iter().enumerate() {
                if *dm == m {
                    qrels.insert(&qid, &format!("d{i}"), 1).unwrap();
                }
            }
        }
    }
    // Training queries are fresh draws, so evaluation queries are held out.
    let train = doc_tokens
        .iter()
        .map(|(m, toks)| {
            let mut q = noise(&mut r, query_noise);
            q.insert(r.gen_range(0..=q.len()), format!("m{m}"));
            TrainInstance::new(q, toks.clone(), vec![]).unwrap()
        })
        .collect();
    MarkerTask { docs, queries, qrels, train }
}

/// Kendall tau-b between two score lists over the same items, by counting
/// every pair. Pairs tied in either list count as neither concordant nor
/// discordant and are removed from that list's normalizer.
pub fn kendall_tau_b(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    let (mut c, mut d, mut ties_a, mut ties_b, mut pairs) = (0u64, 0u64, 0u64, 0u64, 0u64);
    for i in 0..n {
        for j in i + 1..n {
            pairs += 1;
            let x = a[i].partial_cmp(&a[j]).unwrap();
            let y = b[i].partial_cmp(&b[j]).unwrap();
            use std::cmp::Ordering::Equal;
            if x == Equal {
                ties_a += 1;
            }
            if y == Equal {
                ties_b += 1;
            }
            if x != Equal && y != Equal {
                if x == y {
                    c += 1;
                } else {
                    d += 1;
                }
            }
        }
    }
    let denom = (((pairs - ties_a) * (pairs - ties_b)) as f64).sqrt();
    if denom == 0.0 {
        return if a == b { 1.0 } else { 0.0 };
    }
    (c as f64 - d as f64) / denom
}
