//! Representation types shared by every encoder and backend, the comparison
//! functions over them, and top-k selection.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type TermId = u32;

/// Term-id → weight mapping, strictly ascending by term id.
///
/// Weights are finite and nonzero; a zero weight is simply not stored.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    entries: Vec<(TermId, f64)>,
}

impl SparseVector {
    /// Builds a vector from entries in any order. Zero weights are dropped.
    pub fn new(mut entries: Vec<(TermId, f64)>) -> Result<Self> {
        if let Some((t, w)) = entries.iter().find(|(_, w)| !w.is_finite()) {
            return Err(Error::invalid(format!("non-finite weight {w} for term {t}")));
        }
        entries.retain(|&(_, w)| w != 0.0);
        entries.sort_unstable_by_key(|&(t, _)| t);
        if let Some(pair) = entries.windows(2).find(|p| p[0].0 == p[1].0) {
            return Err(Error::invalid(format!("duplicate term id {}", pair[0].0)));
        }
        Ok(SparseVector { entries })
    }

    /// Caller guarantees ascending unique ids and finite nonzero weights.
    pub(crate) fn from_sorted_unchecked(entries: Vec<(TermId, f64)>) -> Self {
        debug_assert!(entries.windows(2).all(|p| p[0].0 < p[1].0));
        debug_assert!(entries.iter().all(|&(_, w)| w.is_finite() && w != 0.0));
        SparseVector { entries }
    }

    pub fn empty() -> Self {
        SparseVector::default()
    }

    pub fn entries(&self) -> &[(TermId, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, term: TermId) -> Option<f64> {
        self.entries
            .binary_search_by_key(&term, |&(t, _)| t)
            .ok()
            .map(|i| self.entries[i].1)
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|&(_, w)| w * w).sum::<f64>().sqrt()
    }

    /// One past the largest stored term id (0 for the empty vector).
    pub fn dim_hint(&self) -> usize {
        self.entries.last().map_or(0, |&(t, _)| t as usize + 1)
    }

    /// Materializes the vector over `dim` dimensions; terms at or beyond
    /// `dim` are dropped.
    pub fn to_dense(&self, dim: usize) -> DenseVector {
        let mut values = vec![0.0; dim];
        for &(t, w) in &self.entries {
            if (t as usize) < dim {
                values[t as usize] = w;
            }
        }
        DenseVector { values }
    }
}

/// Fixed-width latent vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseVector {
    values: Vec<f64>,
}

impl DenseVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("dense vector must have dim > 0"));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite dense value {v}")));
        }
        Ok(DenseVector { values })
    }

    pub(crate) fn from_values_unchecked(values: Vec<f64>) -> Self {
        DenseVector { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Nonzero coordinates as a sparse vector keyed by dimension index.
    pub fn to_sparse(&self) -> SparseVector {
        let entries = self
            .values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, &v)| (i as TermId, v))
            .collect();
        SparseVector::from_sorted_unchecked(entries)
    }
}

/// Per-token rows for late-interaction (MaxSim) comparison. Rows are unit
/// normalized at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiVector {
    rows: Vec<DenseVector>,
}

impl MultiVector {
    /// Normalizes every row; zero rows, ragged dims and empty input are errors.
    pub fn normalized(rows: Vec<DenseVector>) -> Result<Self> {
        let dim = rows.first().ok_or_else(|| Error::invalid("multi-vector needs at least one row"))?.dim();
        let mut out = Vec::with_capacity(rows.len());
        for row in rows {
            if row.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, actual: row.dim() });
            }
            out.push(crate::encoders::dense::l2_normalize(&row)?);
        }
        Ok(MultiVector { rows: out })
    }

    pub fn rows(&self) -> &[DenseVector] {
        &self.rows
    }

    pub fn dim(&self) -> usize {
        self.rows[0].dim()
    }
}

/// A query or document representation produced by an encoder.
#[derive(Debug, Clone, PartialEq)]
pub enum Repr {
    Sparse(SparseVector),
    Dense(DenseVector),
    Multi(MultiVector),
}

impl Repr {
    pub fn kind(&self) -> &'static str {
        match self {
            Repr::Sparse(_) => "sparse",
            Repr::Dense(_) => "dense",
            Repr::Multi(_) => "multi",
        }
    }
}

pub fn inner_product_sparse(a: &SparseVector, b: &SparseVector) -> f64 {
    let (a, b) = (a.entries(), b.entries());
    let (mut i, mut j) = (0, 0);
    let mut sum = 0.0;
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => {
                sum += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    sum
}

/// True when the two vectors share at least one term.
pub fn sparse_overlap(a: &SparseVector, b: &SparseVector) -> bool {
    let (a, b) = (a.entries(), b.entries());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => return true,
        }
    }
    false
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn inner_product_dense(a: &DenseVector, b: &DenseVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), actual: b.dim() });
    }
    Ok(dot(a.values(), b.values()))
}

pub fn cosine(a: &DenseVector, b: &DenseVector) -> Result<f64> {
    let ip = inner_product_dense(a, b)?;
    let denom = a.norm() * b.norm();
    if denom == 0.0 {
        return Err(Error::invalid("cosine of a zero-norm vector"));
    }
    Ok(ip / denom)
}

pub fn cosine_sparse(a: &SparseVector, b: &SparseVector) -> Result<f64> {
    let denom = a.norm() * b.norm();
    if denom == 0.0 {
        return Err(Error::invalid("cosine of a zero-norm vector"));
    }
    Ok(inner_product_sparse(a, b) / denom)
}

/// Sum over query rows of the best dot product against any document row.
pub fn max_sim(q: &MultiVector, d: &MultiVector) -> Result<f64> {
    if q.dim() != d.dim() {
        return Err(Error::DimensionMismatch { expected: q.dim(), actual: d.dim() });
    }
    Ok(q.rows()
        .iter()
        .map(|qr| {
            d.rows()
                .iter()
                .map(|dr| dot(qr.values(), dr.values()))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum())
}

/// The comparison function φ of a logical scoring model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparisonFunction {
    InnerProduct,
    Cosine,
    MaxSim,
}

impl ComparisonFunction {
    pub fn name(self) -> &'static str {
        match self {
            ComparisonFunction::InnerProduct => "inner_product",
            ComparisonFunction::Cosine => "cosine",
            ComparisonFunction::MaxSim => "max_sim",
        }
    }

    pub fn compare(self, q: &Repr, d: &Repr) -> Result<f64> {
        use ComparisonFunction::*;
        match (self, q, d) {
            (InnerProduct, Repr::Sparse(a), Repr::Sparse(b)) => Ok(inner_product_sparse(a, b)),
            (InnerProduct, Repr::Dense(a), Repr::Dense(b)) => inner_product_dense(a, b),
            (Cosine, Repr::Sparse(a), Repr::Sparse(b)) => cosine_sparse(a, b),
            (Cosine, Repr::Dense(a), Repr::Dense(b)) => cosine(a, b),
            (MaxSim, Repr::Multi(a), Repr::Multi(b)) => max_sim(a, b),
            _ => Err(Error::Unsupported(format!(
                "comparison {} does not accept ({}, {})",
                self.name(),
                q.kind(),
                d.kind()
            ))),
        }
    }
}

impl std::str::FromStr for ComparisonFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inner_product" | "ip" => Ok(ComparisonFunction::InnerProduct),
            "cosine" => Ok(ComparisonFunction::Cosine),
            "max_sim" | "maxsim" => Ok(ComparisonFunction::MaxSim),
            other => Err(Error::invalid(format!("unknown comparison function '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDoc {
    pub doc_id: String,
    pub score: f64,
}

impl ScoredDoc {
    pub fn new(doc_id: impl Into<String>, score: f64) -> Self {
        ScoredDoc { doc_id: doc_id.into(), score }
    }
}

/// Ranking order: score descending, then doc id ascending.
pub fn rank_cmp(a_score: f64, a_id: &str, b_score: f64, b_id: &str) -> Ordering {
    b_score.total_cmp(&a_score).then_with(|| a_id.cmp(b_id))
}

/// Per-query hits sorted by (score desc, doc id asc) with no duplicate ids.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RankedList {
    pub query_id: String,
    hits: Vec<ScoredDoc>,
}

impl RankedList {
    /// Sorts `hits` into ranking order; duplicate ids and non-finite scores
    /// are rejected.
    pub fn new(query_id: impl Into<String>, mut hits: Vec<ScoredDoc>) -> Result<Self> {
        check_scores(&hits)?;
        hits.sort_by(|a, b| rank_cmp(a.score, &a.doc_id, b.score, &b.doc_id));
        let list = RankedList { query_id: query_id.into(), hits };
        list.check_unique()?;
        Ok(list)
    }

    /// Keeps the given order, which must have non-increasing scores. Used for
    /// runs read back from text, where rounding can merge distinct scores.
    pub fn from_ranked(query_id: impl Into<String>, hits: Vec<ScoredDoc>) -> Result<Self> {
        check_scores(&hits)?;
        if let Some(p) = hits.windows(2).find(|p| p[0].score < p[1].score) {
            return Err(Error::data(format!(
                "hits out of order: {} ({}) ranked above {} ({})",
                p[0].doc_id, p[0].score, p[1].doc_id, p[1].score
            )));
        }
        let list = RankedList { query_id: query_id.into(), hits };
        list.check_unique()?;
        Ok(list)
    }

    pub(crate) fn from_sorted_unchecked(query_id: String, hits: Vec<ScoredDoc>) -> Self {
        RankedList { query_id, hits }
    }

    pub fn empty(query_id: impl Into<String>) -> Self {
        RankedList { query_id: query_id.into(), hits: Vec::new() }
    }

    fn check_unique(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::with_capacity(self.hits.len());
        for h in &self.hits {
            if !seen.insert(h.doc_id.as_str()) {
                return Err(Error::data(format!("duplicate doc id {} in query {}", h.doc_id, self.query_id)));
            }
        }
        Ok(())
    }

    pub fn hits(&self) -> &[ScoredDoc] {
        &self.hits
    }

    pub fn into_hits(self) -> Vec<ScoredDoc> {
        self.hits
    }

    pub fn len(&self) -> usize {
        self.hits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }

    pub fn doc_ids(&self) -> Vec<&str> {
        self.hits.iter().map(|h| h.doc_id.as_str()).collect()
    }

    pub fn truncate(&mut self, k: usize) {
        self.hits.truncate(k);
    }
}

fn check_scores(hits: &[ScoredDoc]) -> Result<()> {
    match hits.iter().find(|h| !h.score.is_finite()) {
        Some(h) => Err(Error::data(format!("non-finite score for {}", h.doc_id))),
        None => Ok(()),
    }
}

struct HeapEntry<'a> {
    score: f64,
    id: &'a str,
}

// Worse-ranked entries compare greater, so the heap top is the current k-th.
impl Ord for HeapEntry<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        rank_cmp(self.score, self.id, other.score, other.id)
    }
}

impl PartialOrd for HeapEntry<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for HeapEntry<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for HeapEntry<'_> {}

/// Bounded collector keeping the best `k` (score, id) pairs.
pub struct TopK<'a> {
    k: usize,
    heap: BinaryHeap<HeapEntry<'a>>,
}

impl<'a> TopK<'a> {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        Ok(TopK { k, heap: BinaryHeap::with_capacity(k + 1) })
    }

    pub fn is_full(&self) -> bool {
        self.heap.len() >= self.k
    }

    /// Score of the current k-th hit once the collector is full.
    pub fn threshold(&self) -> Option<f64> {
        if self.is_full() {
            self.heap.peek().map(|e| e.score)
        } else {
            None
        }
    }

    /// Offers a candidate; returns whether it was kept.
    pub fn push(&mut self, score: f64, id: &'a str) -> bool {
        let entry = HeapEntry { score, id };
        if !self.is_full() {
            self.heap.push(entry);
            return true;
        }
        let mut top = self.heap.peek_mut().expect("full heap is nonempty");
        if entry < *top {
            *top = entry;
            true
        } else {
            false
        }
    }

    pub fn into_ranked_list(self, query_id: impl Into<String>) -> RankedList {
        let mut entries = self.heap.into_vec();
        entries.sort();
        let hits = entries.into_iter().map(|e| ScoredDoc::new(e.id, e.score)).collect();
        RankedList::from_sorted_unchecked(query_id.into(), hits)
    }
}

/// Selects the `k` best hits under (score desc, doc id asc). When a doc id
/// occurs more than once only its best-ranked occurrence is considered.
pub fn top_k_select<I>(query_id: impl Into<String>, scored: I, k: usize) -> Result<RankedList>
where
    I: IntoIterator<Item = ScoredDoc>,
{
    let mut best: HashMap<String, f64> = HashMap::new();
    for s in scored {
        if !s.score.is_finite() {
            return Err(Error::data(format!("non-finite score for {}", s.doc_id)));
        }
        best.entry(s.doc_id)
            .and_modify(|v| {
                if s.score > *v {
                    *v = s.score
                }
            })
            .or_insert(s.score);
    }
    let mut top = TopK::new(k)?;
    for (id, &score) in &best {
        top.push(score, id);
    }
    Ok(top.into_ranked_list(query_id))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sv(e: &[(TermId, f64)]) -> SparseVector {
        SparseVector::new(e.to_vec()).unwrap()
    }

    fn dv(v: &[f64]) -> DenseVector {
        DenseVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn sparse_construction_rules() {
        let v = sv(&[(5, 1.0), (2, 0.0), (1, -2.0)]);
        assert_eq!(v.entries(), &[(1, -2.0), (5, 1.0)]);
        assert!(SparseVector::new(vec![(1, 1.0), (1, 2.0)]).is_err());
        assert!(SparseVector::new(vec![(1, f64::NAN)]).is_err());
    }

    #[test]
    fn sparse_inner_product_examples() {
        assert_eq!(inner_product_sparse(&SparseVector::empty(), &sv(&[(3, 2.0)])), 0.0);
        assert_eq!(inner_product_sparse(&sv(&[(1, 2.0), (2, 3.0)]), &sv(&[(2, 4.0), (5, 1.0)])), 12.0);
    }

    #[test]
    fn dense_examples() {
        assert_eq!(inner_product_dense(&dv(&[1.0, 0.0, 0.0]), &dv(&[0.0, 1.0, 0.0])).unwrap(), 0.0);
        let u = dv(&[0.6, 0.8]);
        assert!((inner_product_dense(&u, &u).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(
            inner_product_dense(&dv(&[1.0]), &dv(&[1.0, 2.0])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn cosine_examples() {
        let v = dv(&[1.5, -2.0, 0.25]);
        let neg = dv(&[-1.5, 2.0, -0.25]);
        assert!((cosine(&v, &v).unwrap() - 1.0).abs() < 1e-12);
        assert!((cosine(&v, &neg).unwrap() + 1.0).abs() < 1e-12);
        assert!((cosine(&dv(&[3.0, 4.0]), &dv(&[4.0, 3.0])).unwrap() - 0.96).abs() < 1e-12);
        assert!(cosine(&dv(&[0.0, 0.0]), &v.clone()).is_err());
    }

    #[test]
    fn max_sim_examples() {
        let e1 = dv(&[1.0, 0.0]);
        let e2 = dv(&[0.0, 1.0]);
        let single = MultiVector::normalized(vec![dv(&[0.3, 0.4])]).unwrap();
        assert!((max_sim(&single, &single).unwrap() - 1.0).abs() < 1e-12);
        let q = MultiVector::normalized(vec![e1.clone(), e2]).unwrap();
        let d = MultiVector::normalized(vec![e1]).unwrap();
        assert_eq!(max_sim(&q, &d).unwrap(), 1.0);
        assert!(MultiVector::normalized(vec![]).is_err());
        let other = MultiVector::normalized(vec![dv(&[1.0, 0.0, 0.0])]).unwrap();
        assert!(max_sim(&q, &other).is_err());
    }

    #[test]
    fn comparison_rejects_mismatched_kinds() {
        let s = Repr::Sparse(sv(&[(0, 1.0)]));
        let d = Repr::Dense(dv(&[1.0]));
        assert!(ComparisonFunction::InnerProduct.compare(&s, &d).is_err());
        assert!(ComparisonFunction::MaxSim.compare(&d, &d).is_err());
        assert_eq!(ComparisonFunction::InnerProduct.compare(&s, &s).unwrap(), 1.0);
    }

    #[test]
    fn top_k_examples() {
        let docs = vec![ScoredDoc::new("A", 1.0), ScoredDoc::new("B", 2.0), ScoredDoc::new("C", 0.5)];
        let r = top_k_select("q", docs, 2).unwrap();
        assert_eq!(r.hits(), &[ScoredDoc::new("B", 2.0), ScoredDoc::new("A", 1.0)]);

        let r = top_k_select("q", vec![ScoredDoc::new("B", 1.0), ScoredDoc::new("A", 1.0)], 1).unwrap();
        assert_eq!(r.hits(), &[ScoredDoc::new("A", 1.0)]);

        assert!(top_k_select("q", Vec::new(), 0).is_err());
        assert!(top_k_select("q", Vec::new(), 3).unwrap().is_empty());
    }

    #[test]
    fn ranked_list_validation() {
        assert!(RankedList::new("q", vec![ScoredDoc::new("a", 1.0), ScoredDoc::new("a", 2.0)]).is_err());
        assert!(RankedList::from_ranked("q", vec![ScoredDoc::new("a", 1.0), ScoredDoc::new("b", 2.0)]).is_err());
        let r = RankedList::new("q", vec![ScoredDoc::new("b", 1.0), ScoredDoc::new("a", 1.0)]).unwrap();
        assert_eq!(r.doc_ids(), vec!["a", "b"]);
    }
}
