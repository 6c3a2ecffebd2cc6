//! Runs any logical scoring model on any compatible physical backend and
//! profiles the result against the brute-force oracle.

use std::collections::HashSet;
use std::time::Instant;

use serde::Serialize;

use super::brute::BruteForceIndex;
use super::hnsw::{HnswIndex, HnswParams, Metric};
use super::inverted::{build_inverted_index, InvertedIndex};
use super::postings::WeightCoding;
use super::{SearchBudget, SearchStats};
use crate::analysis::TermDictionary;
use crate::encoders::dense::DenseStore;
use crate::encoders::Document;
use crate::error::{Error, Result};
use crate::eval::Run;
use crate::exec::Execution;
use crate::model::{LogicalScoringModel, SparseStorage};
use crate::reprs::{sparse_overlap, ComparisonFunction, DenseVector, RankedList, Repr, SparseVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    BruteForce,
    InvertedDaat,
    InvertedMaxScore,
    Hnsw,
}

impl BackendKind {
    pub fn name(self) -> &'static str {
        match self {
            BackendKind::BruteForce => "brute",
            BackendKind::InvertedDaat => "inverted",
            BackendKind::InvertedMaxScore => "maxscore",
            BackendKind::Hnsw => "hnsw",
        }
    }

    fn is_inverted(self) -> bool {
        matches!(self, BackendKind::InvertedDaat | BackendKind::InvertedMaxScore)
    }
}

impl std::str::FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "brute" | "brute_force" => Ok(BackendKind::BruteForce),
            "inverted" | "daat" => Ok(BackendKind::InvertedDaat),
            "maxscore" | "max_score" => Ok(BackendKind::InvertedMaxScore),
            "hnsw" => Ok(BackendKind::Hnsw),
            other => Err(Error::invalid(format!("unknown backend '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// HNSW construction parameters; the metric is taken from the model.
    pub hnsw: HnswParams,
}

impl BackendConfig {
    pub fn new(kind: BackendKind) -> Self {
        BackendConfig { kind, hnsw: HnswParams::default() }
    }
}

/// One quality / space / time record per (model, backend, corpus).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Profile {
    pub model: String,
    pub backend: String,
    pub corpus: String,
    pub docs: usize,
    pub queries: usize,
    pub k: usize,
    pub index_bytes: usize,
    pub build_ms: f64,
    pub mean_query_ms: f64,
    /// Mean overlap of the backend's top-k with the exact top-k.
    pub recall: f64,
    /// Postings scored, documents scored, or similarity evaluations.
    pub work: u64,
}

#[derive(Debug, Clone)]
pub struct CrossOutput {
    pub run: Run,
    pub profile: Profile,
}

/// A built backend, ready to answer encoded queries.
pub enum BuiltBackend {
    Brute(BruteForceIndex),
    Inverted { index: InvertedIndex, pruned: bool },
    Hnsw { index: HnswIndex, dim: usize },
}

impl BuiltBackend {
    pub fn size_bytes(&self) -> usize {
        match self {
            BuiltBackend::Brute(b) => b.size_bytes(),
            BuiltBackend::Inverted { index, .. } => index.to_bytes().len(),
            BuiltBackend::Hnsw { index, .. } => index.to_bytes().len(),
        }
    }

    pub fn search(&self, query_id: &str, q: &Repr, budget: &SearchBudget) -> Result<(RankedList, SearchStats)> {
        match self {
            BuiltBackend::Brute(b) => b.search(query_id, q, budget),
            BuiltBackend::Inverted { index, pruned } => {
                let q = as_sparse(q)?;
                if *pruned {
                    index.max_score_search(query_id, &q, budget)
                } else {
                    index.daat_search(query_id, &q, budget)
                }
            }
            BuiltBackend::Hnsw { index, dim } => index.search(query_id, &as_dense(q, *dim)?, budget),
        }
    }
}

fn as_sparse(r: &Repr) -> Result<SparseVector> {
    match r {
        Repr::Sparse(v) => Ok(v.clone()),
        Repr::Dense(v) => Ok(v.to_sparse()),
        Repr::Multi(_) => Err(Error::Unsupported("multi-vector representations cannot use an inverted index".into())),
    }
}

fn as_dense(r: &Repr, dim: usize) -> Result<DenseVector> {
    match r {
        Repr::Dense(v) => Ok(v.clone()),
        Repr::Sparse(v) => Ok(v.to_dense(dim)),
        Repr::Multi(_) => Err(Error::Unsupported("multi-vector representations cannot use HNSW".into())),
    }
}

fn unsupported(model: &LogicalScoringModel, kind: BackendKind) -> Error {
    Error::Unsupported(format!(
        "unsupported (comparison, backend) pair: ({}, {}) for model {}",
        model.comparison.name(),
        kind.name(),
        model.name
    ))
}

/// Builds `kind` over already-encoded documents.
pub fn build_backend(
    model: &LogicalScoringModel,
    config: &BackendConfig,
    docs: Vec<(String, Repr)>,
) -> Result<BuiltBackend> {
    let kind = config.kind;
    match (model.comparison, kind) {
        (_, BackendKind::BruteForce) => Ok(BuiltBackend::Brute(BruteForceIndex::build(docs, model.comparison)?)),
        (ComparisonFunction::InnerProduct, k) if k.is_inverted() => {
            let dense = docs.iter().any(|(_, r)| matches!(r, Repr::Dense(_)));
            let sparse: Vec<(String, SparseVector)> =
                docs.iter().map(|(id, r)| as_sparse(r).map(|v| (id.clone(), v))).collect::<Result<_>>()?;
            let dict = if dense {
                let dim = sparse.iter().map(|(_, v)| v.dim_hint()).max().unwrap_or(0);
                let mut d = TermDictionary::new();
                for i in 0..dim {
                    d.intern(&format!("dim{i}"));
                }
                d
            } else {
                match &model.dict {
                    Some(d) => (**d).clone(),
                    None => return Err(Error::invalid(format!("model {} has no vocabulary", model.name))),
                }
            };
            let coding = match model.storage {
                SparseStorage::Impact { .. } if !dense => WeightCoding::Impact,
                _ => WeightCoding::Float32,
            };
            let mut index = build_inverted_index(dict, sparse.iter().map(|(i, v)| (i.as_str(), v)), coding)?;
            index.metadata.insert("model".into(), model.name.clone());
            Ok(BuiltBackend::Inverted { index, pruned: kind == BackendKind::InvertedMaxScore })
        }
        (ComparisonFunction::InnerProduct | ComparisonFunction::Cosine, BackendKind::Hnsw) => {
            let dim = match docs.first().map(|(_, r)| r) {
                Some(Repr::Dense(v)) => v.dim(),
                Some(Repr::Sparse(_)) => model
                    .dict
                    .as_ref()
                    .map(|d| d.len())
                    .unwrap_or_else(|| docs.iter().map(|(_, r)| if let Repr::Sparse(v) = r { v.dim_hint() } else { 0 }).max().unwrap_or(0))
                    .max(1),
                Some(Repr::Multi(_)) => return Err(unsupported(model, kind)),
                None => return Err(Error::data("no documents to index")),
            };
            let mut store = DenseStore::new(dim)?;
            for (id, r) in &docs {
                store.push_vector(id.clone(), &as_dense(r, dim)?)?;
            }
            let metric = if model.comparison == ComparisonFunction::Cosine { Metric::Cosine } else { Metric::InnerProduct };
            let index = HnswIndex::build(&store, HnswParams { metric, ..config.hnsw })?;
            Ok(BuiltBackend::Hnsw { index, dim })
        }
        _ => Err(unsupported(model, kind)),
    }
}

/// Recall of `got` against the exact list `oracle`.
fn overlap_recall(got: &RankedList, oracle: &[&str]) -> Option<f64> {
    if oracle.is_empty() {
        return None;
    }
    let got: HashSet<&str> = got.doc_ids().into_iter().collect();
    Some(oracle.iter().filter(|d| got.contains(*d)).count() as f64 / oracle.len() as f64)
}

/// Encodes corpus and queries with `model`, builds `backend`, answers every
/// query and compares against brute force under the same model.
///
/// For inverted backends the oracle is restricted to documents sharing a
/// term with the query, since those are the only documents such an index
/// can return.
pub fn cross_execute(
    model: &LogicalScoringModel,
    backend: &BackendConfig,
    corpus_name: &str,
    docs: &[Document],
    queries: &[Document],
    budget: &SearchBudget,
    exec: Execution,
) -> Result<CrossOutput> {
    let encoded = model.encode_documents(docs, exec)?;
    let query_reprs = model.encode_queries(queries, exec)?;

    let started = Instant::now();
    let built = build_backend(model, backend, encoded.clone())?;
    let build_ms = started.elapsed().as_secs_f64() * 1e3;

    let results = exec.map_range(queries.len(), |i| {
        let t = Instant::now();
        built.search(&queries[i].id, &query_reprs[i], budget).map(|(r, s)| (r, s, t.elapsed().as_secs_f64() * 1e3))
    });
    let results: Vec<(RankedList, SearchStats, f64)> = results.into_iter().collect::<Result<_>>()?;

    let oracle = BruteForceIndex::build(encoded, model.comparison)?;
    let recalls: Vec<Option<f64>> = exec.map_range(queries.len(), |i| {
        let (exact, _) = oracle.search(&queries[i].id, &query_reprs[i], budget).ok()?;
        let reference: Vec<&str> = if backend.kind.is_inverted() {
            let q = as_sparse(&query_reprs[i]).ok()?;
            exact
                .hits()
                .iter()
                .filter(|h| {
                    let pos = oracle.ids().iter().position(|id| id == &h.doc_id).expect("oracle id");
                    as_sparse(&oracle.reprs()[pos]).map(|d| sparse_overlap(&q, &d)).unwrap_or(false)
                })
                .map(|h| h.doc_id.as_str())
                .collect()
        } else {
            exact.hits().iter().map(|h| h.doc_id.as_str()).collect()
        };
        overlap_recall(&results[i].0, &reference)
    });
    let measured: Vec<f64> = recalls.into_iter().flatten().collect();
    let recall = if measured.is_empty() { 1.0 } else { measured.iter().sum::<f64>() / measured.len() as f64 };

    let work = results.iter().map(|(_, s, _)| s.work).sum();
    let mean_query_ms =
        if results.is_empty() { 0.0 } else { results.iter().map(|(_, _, ms)| ms).sum::<f64>() / results.len() as f64 };
    let profile = Profile {
        model: model.name.clone(),
        backend: backend.kind.name().to_string(),
        corpus: corpus_name.to_string(),
        docs: docs.len(),
        queries: queries.len(),
        k: budget.k,
        index_bytes: built.size_bytes(),
        build_ms,
        mean_query_ms,
        recall,
        work,
    };
    let run = Run::from_lists(results.into_iter().map(|(r, _, _)| r))?;
    Ok(CrossOutput { run, profile })
}
