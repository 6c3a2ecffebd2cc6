//! Sparse encoders: BM25 and tf–idf document weighting, multi-hot queries,
//! document expansion, impact quantization and learned-weight ingestion.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::read_jsonl;
use crate::analysis::TermDictionary;
use crate::error::{Error, Result};
use crate::reprs::{SparseVector, TermId};

/// Collection statistics required by BM25 and tf–idf.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStats {
    pub num_docs: usize,
    pub avgdl: f64,
    /// Document frequency indexed by term id.
    df: Vec<u32>,
    doc_len: HashMap<String, usize>,
}

impl CorpusStats {
    pub fn df(&self, term: TermId) -> u32 {
        self.df.get(term as usize).copied().unwrap_or(0)
    }

    pub fn doc_len(&self, doc_id: &str) -> Option<usize> {
        self.doc_len.get(doc_id).copied()
    }

    pub fn vocab_len(&self) -> usize {
        self.df.len()
    }
}

/// Single pass over `(doc_id, tokens)`; every token is interned in `dict`.
pub fn compute_corpus_stats<'a, I>(corpus: I, dict: &mut TermDictionary) -> Result<CorpusStats>
where
    I: IntoIterator<Item = (&'a str, &'a [String])>,
{
    let mut df: Vec<u32> = vec![0; dict.len()];
    let mut doc_len = HashMap::new();
    let mut total_len = 0usize;
    let mut seen = HashSet::new();
    for (id, tokens) in corpus {
        if doc_len.insert(id.to_string(), tokens.len()).is_some() {
            return Err(Error::data(format!("duplicate doc id '{id}'")));
        }
        total_len += tokens.len();
        seen.clear();
        for t in tokens {
            let tid = dict.intern(t);
            if seen.insert(tid) {
                if df.len() <= tid as usize {
                    df.resize(tid as usize + 1, 0);
                }
                df[tid as usize] += 1;
            }
        }
    }
    if doc_len.is_empty() {
        return Err(Error::data("empty corpus"));
    }
    let num_docs = doc_len.len();
    let avgdl = total_len as f64 / num_docs as f64;
    if avgdl <= 0.0 {
        return Err(Error::data("corpus contains no tokens"));
    }
    df.resize(dict.len(), 0);
    Ok(CorpusStats { num_docs, avgdl, df, doc_len })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 0.9, b: 0.4 }
    }
}

impl Bm25Params {
    pub fn new(k1: f64, b: f64) -> Result<Self> {
        if !(k1 >= 0.0 && k1.is_finite()) {
            return Err(Error::invalid(format!("k1 must be >= 0, got {k1}")));
        }
        if !(0.0..=1.0).contains(&b) {
            return Err(Error::invalid(format!("b must be in [0, 1], got {b}")));
        }
        Ok(Bm25Params { k1, b })
    }
}

pub fn bm25_idf(num_docs: usize, df: u32) -> f64 {
    let (n, df) = (num_docs as f64, df as f64);
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

fn term_frequencies(tokens: &[String], dict: &TermDictionary) -> Result<Vec<(TermId, u32)>> {
    let mut tf: HashMap<TermId, u32> = HashMap::new();
    for t in tokens {
        let id = dict.get(t).ok_or_else(|| Error::data(format!("term '{t}' is not in the index dictionary")))?;
        *tf.entry(id).or_default() += 1;
    }
    let mut tf: Vec<_> = tf.into_iter().collect();
    tf.sort_unstable();
    Ok(tf)
}

/// BM25 document vector (Lucene-style idf, no query-side weighting).
///
/// Every token must already be in `dict`; a term unknown at index time means
/// the statistics were computed over a different corpus.
pub fn bm25_encode_document(
    tokens: &[String],
    stats: &CorpusStats,
    dict: &TermDictionary,
    params: Bm25Params,
) -> Result<SparseVector> {
    let dl = tokens.len() as f64;
    let norm = params.k1 * (1.0 - params.b + params.b * dl / stats.avgdl);
    let mut entries = Vec::new();
    for (term, tf) in term_frequencies(tokens, dict)? {
        let df = stats.df(term);
        if df == 0 {
            return Err(Error::data(format!("term id {term} has no document frequency")));
        }
        let tf = tf as f64;
        let w = bm25_idf(stats.num_docs, df) * tf * (params.k1 + 1.0) / (tf + norm);
        entries.push((term, w));
    }
    Ok(SparseVector::from_sorted_unchecked(entries))
}

/// tf · ln(N/df); terms present in every document get weight 0 and are dropped.
pub fn tfidf_encode_document(tokens: &[String], stats: &CorpusStats, dict: &TermDictionary) -> Result<SparseVector> {
    let n = stats.num_docs as f64;
    let mut entries = Vec::new();
    for (term, tf) in term_frequencies(tokens, dict)? {
        let df = stats.df(term);
        if df == 0 {
            return Err(Error::data(format!("term id {term} has no document frequency")));
        }
        let w = tf as f64 * (n / df as f64).ln();
        if w != 0.0 {
            entries.push((term, w));
        }
    }
    Ok(SparseVector::from_sorted_unchecked(entries))
}

/// Weight 1 per distinct in-vocabulary term; out-of-vocabulary terms are dropped.
pub fn multi_hot_encode_query(tokens: &[String], dict: &TermDictionary) -> SparseVector {
    let mut ids: Vec<TermId> = tokens.iter().filter_map(|t| dict.get(t)).collect();
    ids.sort_unstable();
    ids.dedup();
    SparseVector::from_sorted_unchecked(ids.into_iter().map(|t| (t, 1.0)).collect())
}

/// Appends each expansion term not already in the document, once.
pub fn apply_expansion(tokens: &[String], expansion_terms: &[String]) -> Vec<String> {
    let mut present: HashSet<&str> = tokens.iter().map(String::as_str).collect();
    let mut out = tokens.to_vec();
    for t in expansion_terms {
        if present.insert(t.as_str()) {
            out.push(t.clone());
        }
    }
    out
}

#[derive(Debug, Deserialize)]
struct ExpansionRecord {
    id: String,
    expansion: Vec<String>,
}

/// Reads `{"id": ..., "expansion": [...]}` lines into id → terms.
pub fn load_expansions(path: &Path) -> Result<HashMap<String, Vec<String>>> {
    let mut out = HashMap::new();
    for (line, rec) in read_jsonl::<ExpansionRecord>(path)? {
        if out.insert(rec.id.clone(), rec.expansion).is_some() {
            return Err(Error::parse(path, line, format!("duplicate id '{}'", rec.id)));
        }
    }
    Ok(out)
}

/// Quantized term weights, ascending by term id, each in `[1, 2^bits - 1]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImpactVector {
    pub entries: Vec<(TermId, u32)>,
    pub bits: u32,
}

impl ImpactVector {
    pub fn to_sparse(&self) -> SparseVector {
        SparseVector::from_sorted_unchecked(self.entries.iter().map(|&(t, i)| (t, i as f64)).collect())
    }
}

/// Result of global linear quantization; `max_weight` is the one constant
/// needed to map impacts back to the original scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Quantized {
    pub vectors: Vec<ImpactVector>,
    pub max_weight: f64,
    pub bits: u32,
}

impl Quantized {
    pub fn levels(&self) -> f64 {
        ((1u64 << self.bits) - 1) as f64
    }

    pub fn dequantize(&self, impact: u32) -> f64 {
        impact as f64 / self.levels() * self.max_weight
    }
}

/// impact = max(1, round(w / w_max · (2^bits − 1))) with one global w_max.
pub fn quantize_impacts(vectors: &[SparseVector], bits: u32) -> Result<Quantized> {
    if !(1..=16).contains(&bits) {
        return Err(Error::invalid(format!("bits must be in [1, 16], got {bits}")));
    }
    if vectors.is_empty() {
        return Err(Error::invalid("cannot quantize an empty collection"));
    }
    let mut max_weight = 0.0f64;
    for v in vectors {
        for &(t, w) in v.entries() {
            if w <= 0.0 {
                return Err(Error::invalid(format!("impact quantization needs positive weights (term {t}: {w})")));
            }
            max_weight = max_weight.max(w);
        }
    }
    let levels = ((1u64 << bits) - 1) as f64;
    let vectors = vectors
        .iter()
        .map(|v| ImpactVector {
            entries: v
                .entries()
                .iter()
                .map(|&(t, w)| (t, ((w / max_weight * levels).round() as u32).max(1)))
                .collect(),
            bits,
        })
        .collect();
    Ok(Quantized { vectors, max_weight, bits })
}

#[derive(Debug, Serialize, Deserialize)]
struct SparseRecord {
    id: String,
    vector: IndexMap<String, f64>,
}

/// Reads `{"id": ..., "vector": {term: weight}}` lines, interning terms.
/// Zero weights are dropped; negative weights are rejected.
pub fn load_learned_sparse(path: &Path, dict: &mut TermDictionary) -> Result<Vec<(String, SparseVector)>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (line, rec) in read_jsonl::<SparseRecord>(path)? {
        if !seen.insert(rec.id.clone()) {
            return Err(Error::parse(path, line, format!("duplicate id '{}'", rec.id)));
        }
        let mut entries = Vec::with_capacity(rec.vector.len());
        for (term, w) in rec.vector {
            if w < 0.0 || !w.is_finite() {
                return Err(Error::parse(path, line, format!("invalid weight {w} for term '{term}'")));
            }
            entries.push((dict.intern(&term), w));
        }
        let v = SparseVector::new(entries).map_err(|e| Error::parse(path, line, e.to_string()))?;
        out.push((rec.id, v));
    }
    Ok(out)
}

/// Writes vectors in the learned-sparse JSONL format, terms in id order.
pub fn save_learned_sparse(path: &Path, vectors: &[(String, SparseVector)], dict: &TermDictionary) -> Result<()> {
    let mut out = String::new();
    for (id, v) in vectors {
        let mut vector = IndexMap::with_capacity(v.len());
        for &(t, w) in v.entries() {
            let term = dict.term(t).ok_or_else(|| Error::invalid(format!("term id {t} not in dictionary")))?;
            vector.insert(term.to_string(), w);
        }
        let rec = SparseRecord { id: id.clone(), vector };
        out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
        out.push('\n');
    }
    crate::binio::write_file_atomic(path, out.as_bytes())
}
