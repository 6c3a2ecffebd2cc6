mod common;

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;

use reprir::analysis::Analyzer;
use reprir::encoders::sparse::Bm25Params;
use reprir::encoders::Document;
use reprir::eval::{average_precision, format_run, mrr_at_k, ndcg_at_k, parse_run, recall_at_k, Qrels, Run};
use reprir::model::{LogicalScoringModel, TermWeighting};
use reprir::physical::cross::{cross_execute, BackendConfig, BackendKind};
use reprir::physical::SearchBudget;
use reprir::pipeline::{depth_sweep, fuse, rerank, rerank_run, CorpusLookup, FusionConfig, Normalization, RerankConfig};
use reprir::{Execution, RankedList, ScoredDoc};

fn random_list(r: &mut impl Rng, q: &str, n: usize, universe: usize) -> RankedList {
    let mut ids: Vec<usize> = (0..universe).collect();
    ids.shuffle(r);
    RankedList::new(q, ids[..n].iter().map(|i| ScoredDoc::new(format!("d{i}"), r.gen_range(-5.0..5.0))).collect()).unwrap()
}

#[test]
fn fusion_is_symmetric_under_dyadic_alpha() {
    let mut r = common::rng(41);
    for _ in 0..50 {
        let a = random_list(&mut r, "q", 20, 40);
        let b = random_list(&mut r, "q", 25, 40);
        for alpha in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let ab = fuse(&a, &b, &FusionConfig::new(alpha, Normalization::MinMax).unwrap()).unwrap();
            let ba = fuse(&b, &a, &FusionConfig::new(1.0 - alpha, Normalization::MinMax).unwrap()).unwrap();
            assert_eq!(ab, ba, "alpha {alpha}");
        }
    }
}

#[test]
fn alpha_one_keeps_the_first_run_order() {
    let mut r = common::rng(42);
    for _ in 0..20 {
        let a = random_list(&mut r, "q", 15, 30);
        let b = random_list(&mut r, "q", 15, 30);
        let fused = fuse(&a, &b, &FusionConfig::new(1.0, Normalization::MinMax).unwrap()).unwrap();
        // Docs only in `b` are imputed a's minimum and may tie with a's last doc.
        let ids = a.doc_ids();
        let kept: Vec<&str> = fused.doc_ids().into_iter().filter(|d| ids.contains(d)).collect();
        assert_eq!(kept, ids);
        assert_eq!(&fused.doc_ids()[..a.len() - 1], &ids[..a.len() - 1]);
    }
}

struct Fixture {
    docs: Vec<Document>,
    queries: Vec<Document>,
    model: LogicalScoringModel,
    first: Run,
}

fn fixture() -> Fixture {
    let mut r = common::rng(43);
    let docs = common::zipf_corpus(&mut r, 300, 200, 10..40);
    let queries = common::zipf_queries(&mut r, 20, 20, 2..4);
    let model = LogicalScoringModel::unsupervised_sparse(
        &docs,
        Analyzer::default(),
        TermWeighting::Bm25(Bm25Params::default()),
        HashMap::new(),
        Execution::Sequential,
    )
    .unwrap();
    let budget = SearchBudget::new(30).unwrap();
    let first = cross_execute(&model, &BackendConfig::new(BackendKind::BruteForce), "zipf", &docs, &queries, &budget, Execution::Parallel)
        .unwrap()
        .run;
    Fixture { docs, queries, model, first }
}

#[test]
fn reranking_with_the_first_stage_model_changes_nothing() {
    let f = fixture();
    let corpus = CorpusLookup::new(&f.docs);
    let (run, failed) = rerank_run(&f.first, &RerankConfig::new(30).unwrap(), &f.model, &f.queries, &corpus, Execution::Parallel).unwrap();
    assert!(failed.is_empty());
    for q in &f.queries {
        assert_eq!(run.get(&q.id).unwrap(), f.first.get(&q.id).unwrap());
    }
}

#[test]
fn depth_one_keeps_only_the_top_candidate() {
    let f = fixture();
    let corpus = CorpusLookup::new(&f.docs);
    let cfg = RerankConfig::new(1).unwrap();
    for q in &f.queries {
        let cands = f.first.get(&q.id).unwrap();
        let out = rerank(cands, &cfg, &f.model, q, &corpus).unwrap();
        assert_eq!(out.list.doc_ids(), vec![cands.hits()[0].doc_id.as_str()]);
    }
}

#[test]
fn carried_scores_add_the_first_stage_score() {
    let f = fixture();
    let corpus = CorpusLookup::new(&f.docs);
    let cfg = RerankConfig { depth: 10, carry_first_stage_score: true };
    let q = &f.queries[0];
    let cands = f.first.get(&q.id).unwrap();
    let out = rerank(cands, &cfg, &f.model, q, &corpus).unwrap();
    for (got, want) in out.list.hits().iter().zip(&cands.hits()[..10]) {
        assert_eq!(got.doc_id, want.doc_id);
        assert_eq!(got.score, want.score + want.score);
    }
}

#[test]
fn depth_sweep_matches_individual_reranks() {
    let f = fixture();
    let corpus = CorpusLookup::new(&f.docs);
    let mut qrels = Qrels::new();
    for (i, q) in f.queries.iter().enumerate() {
        qrels.insert(&q.id, &f.docs[i * 7].id, 1).unwrap();
    }
    let metric = |run: &Run, qrels: &Qrels| mrr_at_k(run, qrels, 10);
    let sweep = depth_sweep(&f.first, &[1, 5, 30], &f.model, &f.queries, &corpus, &qrels, &metric, Execution::Parallel).unwrap();
    for (depth, value) in sweep {
        let (run, _) = rerank_run(&f.first, &RerankConfig::new(depth).unwrap(), &f.model, &f.queries, &corpus, Execution::Sequential).unwrap();
        assert_eq!(value, metric(&run, &qrels).unwrap());
    }
    assert!(depth_sweep(&f.first, &[5, 1], &f.model, &f.queries, &corpus, &qrels, &metric, Execution::Parallel).is_err());
}

#[test]
fn run_text_round_trips() {
    let mut r = common::rng(44);
    let mut run = Run::new();
    for q in 0..30 {
        let n = r.gen_range(1..50);
        let hits = (0..n).map(|d| ScoredDoc::new(format!("doc{d}"), (r.gen_range(-1e4..1e4f64) * 1e6).round() / 1e6)).collect();
        run.push(RankedList::new(format!("q{q}"), hits).unwrap()).unwrap();
    }
    let text = format_run(&run, "rt", &["generated".to_string()]);
    let back = parse_run(&text).unwrap();
    assert_eq!(back.len(), run.len());
    for list in run.lists() {
        let got = back.get(&list.query_id).unwrap();
        assert_eq!(got.doc_ids(), list.doc_ids());
        for (a, b) in got.hits().iter().zip(list.hits()) {
            assert!((a.score - b.score).abs() < 1e-9);
        }
    }
}

#[test]
fn ideal_ordering_scores_one_and_metrics_stay_in_range() {
    let mut r = common::rng(45);
    let mut qrels = Qrels::new();
    let mut ideal = Run::new();
    let mut random = Run::new();
    for q in 0..25 {
        let qid = format!("q{q}");
        let mut graded: Vec<(String, u32)> = (0..r.gen_range(1..6)).map(|i| (format!("r{i}"), r.gen_range(1..4))).collect();
        for (d, g) in &graded {
            qrels.insert(&qid, d, *g).unwrap();
        }
        graded.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let n = graded.len();
        let mut hits: Vec<ScoredDoc> = graded.iter().enumerate().map(|(i, (d, _))| ScoredDoc::new(d.clone(), (100 - i) as f64)).collect();
        hits.extend((0..5).map(|i| ScoredDoc::new(format!("x{i}"), i as f64)));
        ideal.push(RankedList::new(qid.clone(), hits.clone()).unwrap()).unwrap();

        hits.shuffle(&mut r);
        let shuffled = hits.iter().enumerate().map(|(i, h)| ScoredDoc::new(h.doc_id.clone(), -(i as f64))).collect();
        random.push(RankedList::new(qid, shuffled).unwrap()).unwrap();
        assert!(n <= 10);
    }
    for metric in [
        &(|run: &Run, q: &Qrels| mrr_at_k(run, q, 10)) as &dyn Fn(&Run, &Qrels) -> reprir::Result<reprir::eval::MetricValue>,
        &|run: &Run, q: &Qrels| ndcg_at_k(run, q, 10),
        &|run: &Run, q: &Qrels| average_precision(run, q),
        &|run: &Run, q: &Qrels| recall_at_k(run, q, 10),
    ] {
        assert!((metric(&ideal, &qrels).unwrap().mean - 1.0).abs() < 1e-12);
        for list in random.lists() {
            let one = Run::from_lists([list.clone()]).unwrap();
            let v = metric(&one, &qrels).unwrap().mean;
            assert!((0.0..=1.0).contains(&v), "{v}");
        }
    }
}
