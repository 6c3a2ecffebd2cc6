//! Composition over ranked lists: linear score fusion of two runs and
//! multi-stage reranking with depth sweeps.

use std::collections::{BTreeMap, HashMap};

use crate::encoders::Document;
use crate::error::{Error, Result};
use crate::eval::{MetricValue, Qrels, Run};
use crate::exec::Execution;
use crate::model::LogicalScoringModel;
use crate::reprs::{RankedList, ScoredDoc};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    None,
    MinMax,
}

impl std::str::FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Normalization::None),
            "min_max" | "minmax" => Ok(Normalization::MinMax),
            other => Err(Error::invalid(format!("unknown normalization '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionConfig {
    pub alpha: f64,
    pub normalization: Normalization,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig { alpha: 0.5, normalization: Normalization::MinMax }
    }
}

impl FusionConfig {
    pub fn new(alpha: f64, normalization: Normalization) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::invalid(format!("alpha must lie in [0, 1], got {alpha}")));
        }
        Ok(FusionConfig { alpha, normalization })
    }
}

/// Normalized scores of one run and the value imputed for documents it lacks.
fn normalized(list: &RankedList, norm: Normalization) -> (HashMap<&str, f64>, f64) {
    let hits = list.hits();
    if hits.is_empty() {
        return (HashMap::new(), 0.0);
    }
    let max = hits[0].score;
    let min = hits[hits.len() - 1].score;
    let f = |s: f64| match norm {
        Normalization::None => s,
        Normalization::MinMax if max > min => (s - min) / (max - min),
        Normalization::MinMax => 0.0,
    };
    (hits.iter().map(|h| (h.doc_id.as_str(), f(h.score))).collect(), f(min))
}

/// `alpha · a + (1 − alpha) · b` over the union of both hit sets.
pub fn fuse(a: &RankedList, b: &RankedList, cfg: &FusionConfig) -> Result<RankedList> {
    if a.query_id != b.query_id {
        return Err(Error::invalid(format!("cannot fuse runs for '{}' and '{}'", a.query_id, b.query_id)));
    }
    let (sa, miss_a) = normalized(a, cfg.normalization);
    let (sb, miss_b) = normalized(b, cfg.normalization);
    let mut ids: Vec<&str> = a.hits().iter().chain(b.hits()).map(|h| h.doc_id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    let hits = ids
        .into_iter()
        .map(|id| {
            let x = sa.get(id).copied().unwrap_or(miss_a);
            let y = sb.get(id).copied().unwrap_or(miss_b);
            ScoredDoc::new(id, cfg.alpha * x + (1.0 - cfg.alpha) * y)
        })
        .collect();
    RankedList::new(a.query_id.clone(), hits)
}

/// Fuses two runs query by query; a query present in only one run is fused
/// against an empty list.
pub fn fuse_runs(a: &Run, b: &Run, cfg: &FusionConfig) -> Result<Run> {
    let mut out = Run::new();
    for la in a.lists() {
        let lb = b.get(&la.query_id).cloned().unwrap_or_else(|| RankedList::empty(la.query_id.clone()));
        out.push(fuse(la, &lb, cfg)?)?;
    }
    for lb in b.lists().filter(|l| a.get(&l.query_id).is_none()) {
        out.push(fuse(&RankedList::empty(lb.query_id.clone()), lb, cfg)?)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RerankConfig {
    pub depth: usize,
    /// Add the first-stage score to the reranker's score.
    pub carry_first_stage_score: bool,
}

impl RerankConfig {
    pub fn new(depth: usize) -> Result<Self> {
        if depth == 0 {
            return Err(Error::invalid("rerank depth must be >= 1"));
        }
        Ok(RerankConfig { depth, carry_first_stage_score: false })
    }
}

/// Id → document lookup over a borrowed corpus.
pub struct CorpusLookup<'a> {
    map: HashMap<&'a str, &'a Document>,
}

impl<'a> CorpusLookup<'a> {
    pub fn new(docs: &'a [Document]) -> Self {
        CorpusLookup { map: docs.iter().map(|d| (d.id.as_str(), d)).collect() }
    }

    pub fn get(&self, id: &str) -> Option<&'a Document> {
        self.map.get(id).copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reranked {
    pub list: RankedList,
    /// Candidates the reranker could not encode, ranked below every rescored one.
    pub failed: Vec<String>,
}

/// Rescores the top `depth` candidates with `reranker`; the rest are dropped.
pub fn rerank(
    candidates: &RankedList,
    cfg: &RerankConfig,
    reranker: &LogicalScoringModel,
    query: &Document,
    corpus: &CorpusLookup<'_>,
) -> Result<Reranked> {
    if candidates.is_empty() {
        return Err(Error::invalid(format!("no candidates to rerank for '{}'", candidates.query_id)));
    }
    let q = reranker.encode_query(query)?;
    let mut rescored = Vec::new();
    let mut failed = Vec::new();
    for hit in candidates.hits().iter().take(cfg.depth) {
        let doc = corpus
            .get(&hit.doc_id)
            .ok_or_else(|| Error::data(format!("candidate '{}' is not in the corpus", hit.doc_id)))?;
        match reranker.encode_document(doc) {
            Ok(d) => {
                let mut s = reranker.comparison.compare(&q, &d)?;
                if cfg.carry_first_stage_score {
                    s += hit.score;
                }
                rescored.push(ScoredDoc::new(hit.doc_id.clone(), s));
            }
            Err(Error::Data(_)) => failed.push(hit),
            Err(e) => return Err(e),
        }
    }
    let floor = rescored.iter().map(|h| h.score).fold(f64::INFINITY, f64::min);
    let floor = if floor.is_finite() { floor } else { 0.0 };
    let sunk = failed.iter().enumerate().map(|(i, h)| ScoredDoc::new(h.doc_id.clone(), floor - 1.0 - i as f64));
    let hits: Vec<ScoredDoc> = rescored.into_iter().chain(sunk).collect();
    Ok(Reranked {
        list: RankedList::new(candidates.query_id.clone(), hits)?,
        failed: failed.into_iter().map(|h| h.doc_id.clone()).collect(),
    })
}

/// Reranks every query of `first_stage` that appears in `queries`, in query order.
pub fn rerank_run(
    first_stage: &Run,
    cfg: &RerankConfig,
    reranker: &LogicalScoringModel,
    queries: &[Document],
    corpus: &CorpusLookup<'_>,
    exec: Execution,
) -> Result<(Run, BTreeMap<String, Vec<String>>)> {
    let present: Vec<&Document> = queries.iter().filter(|q| first_stage.get(&q.id).is_some()).collect();
    let lists = exec.try_map(&present, |q| {
        let cands = first_stage.get(&q.id).expect("filtered");
        if cands.is_empty() {
            return Ok(Reranked { list: cands.clone(), failed: Vec::new() });
        }
        rerank(cands, cfg, reranker, q, corpus)
    })?;
    let mut failed = BTreeMap::new();
    let mut run = Run::new();
    for r in lists {
        if !r.failed.is_empty() {
            failed.insert(r.list.query_id.clone(), r.failed);
        }
        run.push(r.list)?;
    }
    Ok((run, failed))
}

/// One metric value per rerank depth.
pub fn depth_sweep(
    first_stage: &Run,
    depths: &[usize],
    reranker: &LogicalScoringModel,
    queries: &[Document],
    corpus: &CorpusLookup<'_>,
    qrels: &Qrels,
    metric: &dyn Fn(&Run, &Qrels) -> Result<MetricValue>,
    exec: Execution,
) -> Result<Vec<(usize, MetricValue)>> {
    if depths.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::invalid("depths must be ascending"));
    }
    depths
        .iter()
        .map(|&depth| {
            let (run, _) = rerank_run(first_stage, &RerankConfig::new(depth)?, reranker, queries, corpus, exec)?;
            Ok((depth, metric(&run, qrels)?))
        })
        .collect()
}
