//! Logical scoring models: a query encoder, a document encoder and a
//! comparison function, bound together independently of how retrieval is
//! executed.

use std::collections::HashMap;
use std::sync::Arc;

use crate::analysis::{Analyzer, TermDictionary};
use crate::encoders::dense::{DenseStore, ToyModel};
use crate::encoders::sparse::{
    apply_expansion, bm25_encode_document, compute_corpus_stats, multi_hot_encode_query, quantize_impacts,
    tfidf_encode_document, Bm25Params, CorpusStats,
};
use crate::encoders::Document;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::reprs::{ComparisonFunction, DenseVector, MultiVector, Repr, SparseVector};

/// Maps a text item (identified by `id`) to a representation.
pub trait Encoder: Send + Sync {
    fn encode(&self, id: &str, text: &str) -> Result<Repr>;
}

pub struct MultiHotQueryEncoder {
    pub analyzer: Analyzer,
    pub dict: Arc<TermDictionary>,
}

impl Encoder for MultiHotQueryEncoder {
    fn encode(&self, _id: &str, text: &str) -> Result<Repr> {
        Ok(Repr::Sparse(multi_hot_encode_query(&self.analyzer.tokenize(text), &self.dict)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TermWeighting {
    Bm25(Bm25Params),
    TfIdf,
}

/// Unsupervised sparse document encoder with optional document expansion.
pub struct WeightedDocumentEncoder {
    pub analyzer: Analyzer,
    pub dict: Arc<TermDictionary>,
    pub stats: Arc<CorpusStats>,
    pub weighting: TermWeighting,
    pub expansions: Arc<HashMap<String, Vec<String>>>,
}

impl WeightedDocumentEncoder {
    /// Analyzes the corpus, builds its dictionary and statistics.
    pub fn fit(
        docs: &[Document],
        analyzer: Analyzer,
        weighting: TermWeighting,
        expansions: HashMap<String, Vec<String>>,
        exec: Execution,
    ) -> Result<Self> {
        let tokens = exec.map(docs, |d| expanded_tokens(&analyzer, &expansions, &d.id, &d.contents));
        let mut dict = TermDictionary::new();
        let stats = compute_corpus_stats(docs.iter().zip(&tokens).map(|(d, t)| (d.id.as_str(), t.as_slice())), &mut dict)?;
        Ok(WeightedDocumentEncoder {
            analyzer,
            dict: Arc::new(dict),
            stats: Arc::new(stats),
            weighting,
            expansions: Arc::new(expansions),
        })
    }

    pub fn tokens(&self, id: &str, text: &str) -> Vec<String> {
        expanded_tokens(&self.analyzer, &self.expansions, id, text)
    }

    pub fn encode_sparse(&self, id: &str, text: &str) -> Result<SparseVector> {
        let tokens = self.tokens(id, text);
        match self.weighting {
            TermWeighting::Bm25(p) => bm25_encode_document(&tokens, &self.stats, &self.dict, p),
            TermWeighting::TfIdf => tfidf_encode_document(&tokens, &self.stats, &self.dict),
        }
    }
}

fn expanded_tokens(analyzer: &Analyzer, expansions: &HashMap<String, Vec<String>>, id: &str, text: &str) -> Vec<String> {
    let tokens = analyzer.tokenize(text);
    match expansions.get(id) {
        Some(extra) => {
            let extra: Vec<String> = extra.iter().flat_map(|e| analyzer.tokenize(e)).collect();
            apply_expansion(&tokens, &extra)
        }
        None => tokens,
    }
}

impl Encoder for WeightedDocumentEncoder {
    fn encode(&self, id: &str, text: &str) -> Result<Repr> {
        self.encode_sparse(id, text).map(Repr::Sparse)
    }
}

/// Quantizes an inner sparse encoder's weights with a fixed global scale.
pub struct ImpactDocumentEncoder {
    pub inner: WeightedDocumentEncoder,
    pub max_weight: f64,
    pub bits: u32,
}

impl Encoder for ImpactDocumentEncoder {
    fn encode(&self, id: &str, text: &str) -> Result<Repr> {
        let v = self.inner.encode_sparse(id, text)?;
        let levels = ((1u64 << self.bits) - 1) as f64;
        let entries = v
            .entries()
            .iter()
            .map(|&(t, w)| (t, (w / self.max_weight * levels).round().clamp(1.0, levels)))
            .collect();
        Ok(Repr::Sparse(SparseVector::new(entries)?))
    }
}

/// Representations looked up by id (precomputed learned vectors).
pub struct PrecomputedEncoder {
    pub vectors: HashMap<String, Repr>,
}

impl PrecomputedEncoder {
    pub fn sparse(vectors: Vec<(String, SparseVector)>) -> Self {
        PrecomputedEncoder { vectors: vectors.into_iter().map(|(id, v)| (id, Repr::Sparse(v))).collect() }
    }

    pub fn dense(store: &DenseStore) -> Self {
        let vectors = (0..store.len()).map(|i| (store.ids()[i].clone(), Repr::Dense(store.vector(i)))).collect();
        PrecomputedEncoder { vectors }
    }
}

impl Encoder for PrecomputedEncoder {
    fn encode(&self, id: &str, _text: &str) -> Result<Repr> {
        self.vectors.get(id).cloned().ok_or_else(|| Error::data(format!("no precomputed vector for '{id}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Query,
    Document,
}

/// Mean-pooled toy embedding of the analyzed text.
pub struct ToyDenseEncoder {
    pub analyzer: Analyzer,
    pub model: Arc<ToyModel>,
    pub side: Side,
}

impl Encoder for ToyDenseEncoder {
    fn encode(&self, _id: &str, text: &str) -> Result<Repr> {
        let tokens = self.analyzer.tokenize(text);
        let v = match self.side {
            Side::Query => self.model.encode_query(&tokens)?,
            Side::Document => self.model.encode_doc(&tokens)?,
        };
        Ok(Repr::Dense(v))
    }
}

/// One unit-normalized toy embedding per in-vocabulary token, for MaxSim.
pub struct ToyMultiVectorEncoder {
    pub analyzer: Analyzer,
    pub model: Arc<ToyModel>,
    pub side: Side,
}

impl Encoder for ToyMultiVectorEncoder {
    fn encode(&self, _id: &str, text: &str) -> Result<Repr> {
        let enc = match self.side {
            Side::Query => &self.model.query,
            Side::Document => self.model.doc_encoder(),
        };
        let rows: Vec<DenseVector> = self
            .model
            .term_ids(&self.analyzer.tokenize(text))
            .into_iter()
            .map(|t| DenseVector::from_values_unchecked(enc.row(t).to_vec()))
            .filter(|r| r.norm() > 0.0)
            .collect();
        if rows.is_empty() {
            return Err(Error::data("no in-vocabulary tokens to encode"));
        }
        Ok(Repr::Multi(MultiVector::normalized(rows)?))
    }
}

/// Which physical index weight coding a model's document vectors call for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SparseStorage {
    Float,
    Impact { bits: u32 },
}

/// The bound triple (query encoder, document encoder, comparison function).
#[derive(Clone)]
pub struct LogicalScoringModel {
    pub name: String,
    pub query_encoder: Arc<dyn Encoder>,
    pub doc_encoder: Arc<dyn Encoder>,
    pub comparison: ComparisonFunction,
    /// Vocabulary of sparse representations, when the model has one.
    pub dict: Option<Arc<TermDictionary>>,
    pub storage: SparseStorage,
}

impl std::fmt::Debug for LogicalScoringModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LogicalScoringModel")
            .field("name", &self.name)
            .field("comparison", &self.comparison)
            .finish_non_exhaustive()
    }
}

impl LogicalScoringModel {
    pub fn new(
        name: impl Into<String>,
        query_encoder: Arc<dyn Encoder>,
        doc_encoder: Arc<dyn Encoder>,
        comparison: ComparisonFunction,
    ) -> Self {
        LogicalScoringModel {
            name: name.into(),
            query_encoder,
            doc_encoder,
            comparison,
            dict: None,
            storage: SparseStorage::Float,
        }
    }

    pub fn with_dict(mut self, dict: Arc<TermDictionary>) -> Self {
        self.dict = Some(dict);
        self
    }

    pub fn encode_query(&self, q: &Document) -> Result<Repr> {
        self.query_encoder.encode(&q.id, &q.contents)
    }

    pub fn encode_document(&self, d: &Document) -> Result<Repr> {
        self.doc_encoder.encode(&d.id, &d.contents)
    }

    /// s(q, d) = φ(η_q(q), η_d(d)).
    pub fn score(&self, q: &Document, d: &Document) -> Result<f64> {
        self.comparison.compare(&self.encode_query(q)?, &self.encode_document(d)?)
    }

    pub fn encode_documents(&self, docs: &[Document], exec: Execution) -> Result<Vec<(String, Repr)>> {
        exec.try_map(docs, |d| self.encode_document(d).map(|r| (d.id.clone(), r)))
    }

    pub fn encode_queries(&self, queries: &[Document], exec: Execution) -> Result<Vec<Repr>> {
        exec.try_map(queries, |q| self.encode_query(q))
    }

    /// BM25 (or tf–idf) documents with multi-hot queries over the corpus
    /// vocabulary. `expansions` maps doc id → expansion terms.
    pub fn unsupervised_sparse(
        docs: &[Document],
        analyzer: Analyzer,
        weighting: TermWeighting,
        expansions: HashMap<String, Vec<String>>,
        exec: Execution,
    ) -> Result<Self> {
        let doc_encoder = WeightedDocumentEncoder::fit(docs, analyzer.clone(), weighting, expansions, exec)?;
        let dict = doc_encoder.dict.clone();
        let name = match weighting {
            TermWeighting::Bm25(_) => "bm25",
            TermWeighting::TfIdf => "tfidf",
        };
        let query_encoder = MultiHotQueryEncoder { analyzer, dict: dict.clone() };
        Ok(LogicalScoringModel::new(name, Arc::new(query_encoder), Arc::new(doc_encoder), ComparisonFunction::InnerProduct)
            .with_dict(dict))
    }

    /// BM25 weights globally quantized to `bits`-bit impacts.
    pub fn bm25_impact(
        docs: &[Document],
        analyzer: Analyzer,
        params: Bm25Params,
        expansions: HashMap<String, Vec<String>>,
        bits: u32,
        exec: Execution,
    ) -> Result<Self> {
        let inner = WeightedDocumentEncoder::fit(docs, analyzer.clone(), TermWeighting::Bm25(params), expansions, exec)?;
        let sparse: Vec<SparseVector> = exec
            .try_map(docs, |d| inner.encode_sparse(&d.id, &d.contents))?
            .into_iter()
            .filter(|v| !v.is_empty())
            .collect();
        let q = quantize_impacts(&sparse, bits)?;
        let dict = inner.dict.clone();
        let doc_encoder = ImpactDocumentEncoder { inner, max_weight: q.max_weight, bits };
        let query_encoder = MultiHotQueryEncoder { analyzer, dict: dict.clone() };
        let mut model = LogicalScoringModel::new(
            "bm25_impact",
            Arc::new(query_encoder),
            Arc::new(doc_encoder),
            ComparisonFunction::InnerProduct,
        )
        .with_dict(dict);
        model.storage = SparseStorage::Impact { bits };
        Ok(model)
    }

    /// Precomputed learned sparse document vectors with multi-hot queries
    /// (or precomputed query vectors when given).
    pub fn learned_sparse(
        doc_vectors: Vec<(String, SparseVector)>,
        query_vectors: Option<Vec<(String, SparseVector)>>,
        dict: TermDictionary,
        analyzer: Analyzer,
    ) -> Self {
        let dict = Arc::new(dict);
        let query_encoder: Arc<dyn Encoder> = match query_vectors {
            Some(q) => Arc::new(PrecomputedEncoder::sparse(q)),
            None => Arc::new(MultiHotQueryEncoder { analyzer, dict: dict.clone() }),
        };
        LogicalScoringModel::new(
            "learned_sparse",
            query_encoder,
            Arc::new(PrecomputedEncoder::sparse(doc_vectors)),
            ComparisonFunction::InnerProduct,
        )
        .with_dict(dict)
    }

    /// Precomputed dense query and document vectors.
    pub fn dense_vectors(docs: &DenseStore, queries: &DenseStore, comparison: ComparisonFunction) -> Self {
        LogicalScoringModel::new(
            "dense_vectors",
            Arc::new(PrecomputedEncoder::dense(queries)),
            Arc::new(PrecomputedEncoder::dense(docs)),
            comparison,
        )
    }

    /// Toy bi-encoder with mean pooling.
    pub fn toy_dense(model: Arc<ToyModel>, analyzer: Analyzer, comparison: ComparisonFunction) -> Self {
        LogicalScoringModel::new(
            "toy_dense",
            Arc::new(ToyDenseEncoder { analyzer: analyzer.clone(), model: model.clone(), side: Side::Query }),
            Arc::new(ToyDenseEncoder { analyzer, model, side: Side::Document }),
            comparison,
        )
    }

    /// Toy per-token embeddings compared with MaxSim.
    pub fn toy_max_sim(model: Arc<ToyModel>, analyzer: Analyzer) -> Self {
        LogicalScoringModel::new(
            "toy_max_sim",
            Arc::new(ToyMultiVectorEncoder { analyzer: analyzer.clone(), model: model.clone(), side: Side::Query }),
            Arc::new(ToyMultiVectorEncoder { analyzer, model, side: Side::Document }),
            ComparisonFunction::MaxSim,
        )
    }
}
