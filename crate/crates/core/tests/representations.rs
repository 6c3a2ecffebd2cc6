mod common;

use rand::seq::SliceRandom;
use rand::Rng;

use reprir::reprs::{cosine, inner_product_dense, inner_product_sparse, max_sim, top_k_select};
use reprir::{DenseVector, MultiVector, ScoredDoc, SparseVector};

fn random_sparse(rng: &mut impl Rng, nnz: usize, vocab: u32) -> SparseVector {
    let mut terms: Vec<u32> = (0..vocab).collect();
    terms.shuffle(rng);
    SparseVector::new(terms[..nnz].iter().map(|&t| (t, rng.gen_range(0.01..5.0))).collect()).unwrap()
}

#[test]
fn sparse_inner_product_matches_dense_materialization() {
    let mut r = common::rng(7);
    for _ in 0..200 {
        let a = random_sparse(&mut r, 50, 200);
        let b = random_sparse(&mut r, 50, 200);
        let (mut da, mut db) = (vec![0.0f64; 200], vec![0.0f64; 200]);
        for &(t, w) in a.entries() {
            da[t as usize] = w;
        }
        for &(t, w) in b.entries() {
            db[t as usize] = w;
        }
        let oracle: f64 = da.iter().zip(&db).map(|(x, y)| x * y).sum();
        let got = inner_product_sparse(&a, &b);
        assert!((got - oracle).abs() <= 1e-9 * oracle.abs().max(1.0), "{got} vs {oracle}");
    }
}

#[test]
fn dense_inner_product_and_cosine_match_naive_loops() {
    let mut r = common::rng(8);
    for _ in 0..100 {
        let x: Vec<f64> = (0..64).map(|_| r.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..64).map(|_| r.gen_range(-1.0..1.0)).collect();
        let mut dot = 0.0;
        let (mut nx, mut ny) = (0.0, 0.0);
        for i in 0..64 {
            dot += x[i] * y[i];
            nx += x[i] * x[i];
            ny += y[i] * y[i];
        }
        let (a, b) = (DenseVector::new(x).unwrap(), DenseVector::new(y).unwrap());
        assert!((inner_product_dense(&a, &b).unwrap() - dot).abs() < 1e-12);
        assert!((cosine(&a, &b).unwrap() - dot / (nx.sqrt() * ny.sqrt())).abs() < 1e-12);
    }
}

#[test]
fn max_sim_matches_double_loop() {
    let mut r = common::rng(9);
    let rows = |r: &mut rand_chacha::ChaCha8Rng, n: usize| -> Vec<DenseVector> {
        (0..n).map(|_| DenseVector::new((0..8).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap()).collect()
    };
    for _ in 0..50 {
        let q = MultiVector::normalized(rows(&mut r, 3)).unwrap();
        let d = MultiVector::normalized(rows(&mut r, 5)).unwrap();
        let mut oracle = 0.0;
        for qi in q.rows() {
            let mut best = f64::NEG_INFINITY;
            for dj in d.rows() {
                let s: f64 = qi.values().iter().zip(dj.values()).map(|(a, b)| a * b).sum();
                best = best.max(s);
            }
            oracle += best;
        }
        assert!((max_sim(&q, &d).unwrap() - oracle).abs() < 1e-12);
    }
}

#[test]
fn top_k_matches_full_sort_prefix() {
    let mut r = common::rng(10);
    let ids: Vec<String> = (0..10_000).map(|i| format!("d{i:05}")).collect();
    // Coarse scores force plenty of ties.
    let scores: Vec<f64> = (0..10_000).map(|_| r.gen_range(0..500) as f64 / 7.0).collect();
    let mut full: Vec<(f64, &str)> = scores.iter().copied().zip(ids.iter().map(|s| s.as_str())).collect();
    full.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then_with(|| a.1.cmp(b.1)));
    for k in [1, 10, 100, 1000, 10_000] {
        let got = top_k_select("q", ids.iter().zip(&scores).map(|(d, &s)| ScoredDoc::new(d.clone(), s)), k).unwrap();
        let want: Vec<&str> = full[..k].iter().map(|x| x.1).collect();
        assert_eq!(got.doc_ids(), want, "k={k}");
    }
}
