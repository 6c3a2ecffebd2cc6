use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use reprir::analysis::{Analyzer, TermDictionary};
use reprir::encoders::dense::{load_dense, load_dense_binary, save_dense_binary, DenseStore, ToyModel};
use reprir::encoders::sparse::{load_expansions, load_learned_sparse, save_learned_sparse, Bm25Params};
use reprir::encoders::{load_documents, Document};
use reprir::model::{LogicalScoringModel, TermWeighting};
use reprir::physical::brute::BruteForceIndex;
use reprir::physical::cross::{BackendConfig, BackendKind, BuiltBackend};
use reprir::physical::hnsw::{HnswIndex, HnswParams, Metric};
use reprir::physical::inverted::InvertedIndex;
use reprir::physical::SearchBudget;
use reprir::{ComparisonFunction, Execution, Repr};

use crate::config::{parse_bool, Config};
use crate::error::{data_error, CliError, CliResult};

/// One cell of the encoder taxonomy the CLI can instantiate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Bm25,
    TfIdf,
    Bm25Impact,
    LearnedSparse,
    DenseVectors,
    ToyDense,
    ToyMaxSim,
}

impl ModelKind {
    fn parse(s: &str) -> CliResult<Self> {
        Ok(match s {
            "bm25" => ModelKind::Bm25,
            "tfidf" => ModelKind::TfIdf,
            "bm25_impact" => ModelKind::Bm25Impact,
            "learned_sparse" => ModelKind::LearnedSparse,
            "dense_vectors" => ModelKind::DenseVectors,
            "toy_dense" => ModelKind::ToyDense,
            "toy_max_sim" => ModelKind::ToyMaxSim,
            other => return Err(CliError::Config(format!("unknown model '{other}'"))),
        })
    }

    fn is_sparse(self) -> bool {
        matches!(self, ModelKind::Bm25 | ModelKind::TfIdf | ModelKind::Bm25Impact | ModelKind::LearnedSparse)
    }
}

/// A model together with the documents and queries it was set up for.
pub struct Loaded {
    pub kind: ModelKind,
    pub model: LogicalScoringModel,
    pub docs: Vec<Document>,
    /// Present when the config names a query source.
    pub queries: Option<Vec<Document>>,
}

pub fn execution(cfg: &Config) -> CliResult<Execution> {
    match cfg.str_or("execution", "parallel").as_str() {
        "parallel" => Ok(Execution::Parallel),
        "sequential" => Ok(Execution::Sequential),
        other => Err(CliError::Config(format!("unknown execution mode '{other}'"))),
    }
}

pub fn analyzer(cfg: &Config) -> CliResult<Analyzer> {
    let lowercase = parse_bool("lowercase", &cfg.str_or("lowercase", "true"))?;
    let stopwords = match cfg.opt_input_path("stopwords")? {
        Some(p) => Analyzer::load_stopwords(&p)?,
        None => Default::default(),
    };
    Ok(Analyzer::new(lowercase, stopwords))
}

fn non_empty(docs: Vec<Document>, what: &str) -> CliResult<Vec<Document>> {
    if docs.is_empty() {
        return Err(data_error(format!("{what} is empty")));
    }
    Ok(docs)
}

fn corpus(cfg: &Config) -> CliResult<Vec<Document>> {
    non_empty(load_documents(&cfg.input_path("corpus")?)?, "corpus")
}

fn text_queries(cfg: &Config) -> CliResult<Option<Vec<Document>>> {
    match cfg.opt_input_path("queries")? {
        Some(p) => Ok(Some(non_empty(load_documents(&p)?, "query set")?)),
        None => Ok(None),
    }
}

fn id_only(ids: &[String]) -> Vec<Document> {
    ids.iter().map(|id| Document::new(id.clone(), "")).collect()
}

fn bm25_params(cfg: &Config) -> CliResult<Bm25Params> {
    Ok(Bm25Params::new(cfg.parse_or("k1", 0.9)?, cfg.parse_or("b", 0.4)?)?)
}

fn comparison(cfg: &Config, default: &str) -> CliResult<ComparisonFunction> {
    Ok(cfg.str_or("comparison", default).parse()?)
}

/// Builds the logical scoring model named by `model`.
pub fn load_model(cfg: &Config, exec: Execution) -> CliResult<Loaded> {
    let kind = ModelKind::parse(&cfg.str_or("model", "bm25"))?;
    let loaded = match kind {
        ModelKind::Bm25 | ModelKind::TfIdf | ModelKind::Bm25Impact => {
            let docs = corpus(cfg)?;
            let an = analyzer(cfg)?;
            let expansions = match cfg.opt_input_path("expansions")? {
                Some(p) => load_expansions(&p)?,
                None => HashMap::new(),
            };
            let model = match kind {
                ModelKind::Bm25 => {
                    LogicalScoringModel::unsupervised_sparse(&docs, an, TermWeighting::Bm25(bm25_params(cfg)?), expansions, exec)?
                }
                ModelKind::TfIdf => LogicalScoringModel::unsupervised_sparse(&docs, an, TermWeighting::TfIdf, expansions, exec)?,
                _ => {
                    let bits = cfg.parse_or("bits", 8u32)?;
                    LogicalScoringModel::bm25_impact(&docs, an, bm25_params(cfg)?, expansions, bits, exec)?
                }
            };
            Loaded { kind, model, docs, queries: text_queries(cfg)? }
        }
        ModelKind::LearnedSparse => {
            let mut dict = TermDictionary::new();
            let doc_vectors = load_learned_sparse(&cfg.input_path("doc_vectors")?, &mut dict)?;
            let docs = non_empty(id_only(&doc_vectors.iter().map(|(id, _)| id.clone()).collect::<Vec<_>>()), "doc_vectors")?;
            let (query_vectors, queries) = match cfg.opt_input_path("query_vectors")? {
                Some(p) => {
                    let q = load_learned_sparse(&p, &mut dict)?;
                    let ids: Vec<String> = q.iter().map(|(id, _)| id.clone()).collect();
                    (Some(q), Some(id_only(&ids)))
                }
                None => (None, text_queries(cfg)?),
            };
            let model = LogicalScoringModel::learned_sparse(doc_vectors, query_vectors, dict, analyzer(cfg)?);
            Loaded { kind, model, docs, queries }
        }
        ModelKind::DenseVectors => {
            let docs_store = load_dense(&cfg.input_path("doc_vectors")?, None)?;
            let q_store = load_dense(&cfg.input_path("query_vectors")?, Some(docs_store.dim()))?;
            let model = LogicalScoringModel::dense_vectors(&docs_store, &q_store, comparison(cfg, "inner_product")?);
            let docs = non_empty(id_only(docs_store.ids()), "doc_vectors")?;
            Loaded { kind, model, docs, queries: Some(id_only(q_store.ids())) }
        }
        ModelKind::ToyDense | ModelKind::ToyMaxSim => {
            let toy = Arc::new(ToyModel::load(&cfg.input_path("toy_model")?)?);
            let an = analyzer(cfg)?;
            let model = if kind == ModelKind::ToyDense {
                LogicalScoringModel::toy_dense(toy, an, comparison(cfg, "inner_product")?)
            } else {
                LogicalScoringModel::toy_max_sim(toy, an)
            };
            Loaded { kind, model, docs: corpus(cfg)?, queries: text_queries(cfg)? }
        }
    };
    Ok(loaded)
}

impl Loaded {
    pub fn require_queries(&self) -> CliResult<&[Document]> {
        self.queries.as_deref().ok_or_else(|| CliError::Config("missing required key 'queries'".into()))
    }
}

pub fn backend_kind(cfg: &Config) -> CliResult<BackendKind> {
    Ok(cfg.str_or("backend", "inverted").parse()?)
}

pub fn backend_config(cfg: &Config, kind: BackendKind) -> CliResult<BackendConfig> {
    let mut bc = BackendConfig::new(kind);
    if kind == BackendKind::Hnsw {
        bc.hnsw = HnswParams {
            m: cfg.parse_or("hnsw_m", 16usize)?,
            ef_construction: cfg.parse_or("hnsw_ef_construction", 200usize)?,
            metric: Metric::InnerProduct,
            seed: cfg.parse_or("seed", 0u64)?,
        };
    }
    Ok(bc)
}

pub fn budget(cfg: &Config) -> CliResult<SearchBudget> {
    let k = cfg.parse_or("k", 10usize)?;
    let ef = cfg.parse_or("ef_search", reprir::physical::DEFAULT_EF_SEARCH.max(k))?;
    Ok(SearchBudget::with_ef(k, ef)?)
}

/// Writes `backend` to `path`. Brute force persists the encoded documents:
/// sparse ones as learned-sparse JSONL, dense ones as a vector file.
pub fn persist_backend(loaded: &Loaded, backend: &BuiltBackend, path: &Path) -> CliResult<()> {
    match backend {
        BuiltBackend::Inverted { index, .. } => index.persist(path)?,
        BuiltBackend::Hnsw { index, .. } => index.persist(path)?,
        BuiltBackend::Brute(b) => {
            if loaded.kind.is_sparse() {
                let dict = loaded.model.dict.as_ref().expect("sparse models carry a vocabulary");
                let vectors: Vec<_> = b
                    .ids()
                    .iter()
                    .zip(b.reprs())
                    .map(|(id, r)| match r {
                        Repr::Sparse(v) => (id.clone(), v.clone()),
                        _ => unreachable!("sparse model produced a non-sparse representation"),
                    })
                    .collect();
                save_learned_sparse(path, &vectors, dict)?;
            } else {
                let mut store: Option<DenseStore> = None;
                for (id, r) in b.ids().iter().zip(b.reprs()) {
                    let Repr::Dense(v) = r else {
                        return Err(CliError::Config(format!(
                            "model {} has no persistent brute-force form; use rerank or profile",
                            loaded.model.name
                        )));
                    };
                    let s = match &mut store {
                        Some(s) => s,
                        None => store.insert(DenseStore::new(v.dim())?),
                    };
                    s.push_vector(id.clone(), v)?;
                }
                save_dense_binary(path, &store.ok_or_else(|| data_error("no documents to index"))?)?;
            }
        }
    }
    Ok(())
}

/// Reopens an index written by [`persist_backend`] for `loaded`'s model.
pub fn load_backend(loaded: &Loaded, kind: BackendKind, path: &Path) -> CliResult<BuiltBackend> {
    let model = &loaded.model;
    match kind {
        BackendKind::InvertedDaat | BackendKind::InvertedMaxScore => {
            let index = InvertedIndex::load(path)?;
            if let Some(dict) = &model.dict {
                if index.dict().terms() != dict.terms() {
                    return Err(data_error(format!("{} was built with a different vocabulary", path.display())));
                }
            }
            Ok(BuiltBackend::Inverted { index, pruned: kind == BackendKind::InvertedMaxScore })
        }
        BackendKind::Hnsw => {
            let index = HnswIndex::load(path)?;
            let dim = index.store().dim();
            Ok(BuiltBackend::Hnsw { index, dim })
        }
        BackendKind::BruteForce => {
            let docs: Vec<(String, Repr)> = if loaded.kind.is_sparse() {
                let mut dict = model.dict.as_deref().cloned().unwrap_or_default();
                let known = dict.len();
                let v = load_learned_sparse(path, &mut dict)?;
                if dict.len() != known {
                    return Err(data_error(format!("{} has terms outside the model vocabulary", path.display())));
                }
                v.into_iter().map(|(id, v)| (id, Repr::Sparse(v))).collect()
            } else if loaded.kind == ModelKind::ToyMaxSim {
                return Err(CliError::Config(format!("model {} has no persistent brute-force form; use rerank or profile", model.name)));
            } else {
                let store = load_dense_binary(path)?;
                (0..store.len()).map(|i| (store.ids()[i].clone(), Repr::Dense(store.vector(i)))).collect()
            };
            Ok(BuiltBackend::Brute(BruteForceIndex::build(docs, model.comparison)?))
        }
    }
}
