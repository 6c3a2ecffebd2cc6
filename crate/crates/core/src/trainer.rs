//! Contrastive training of the toy bi-encoder: in-batch negatives, an
//! analytic gradient of the softmax loss, and plain seeded SGD.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::analysis::{Analyzer, TermDictionary};
use crate::encoders::dense::{ToyEncoder, ToyModel};
use crate::encoders::read_jsonl;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::reprs::{DenseVector, TermId};

/// One training example as analyzed token lists.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainInstance {
    pub query: Vec<String>,
    pub positive: Vec<String>,
    pub negatives: Vec<Vec<String>>,
}

impl TrainInstance {
    pub fn new(query: Vec<String>, positive: Vec<String>, negatives: Vec<Vec<String>>) -> Result<Self> {
        if query.is_empty() || positive.is_empty() {
            return Err(Error::data("training instance needs a nonempty query and positive"));
        }
        Ok(TrainInstance { query, positive, negatives })
    }
}

#[derive(Debug, Deserialize)]
struct TrainRecord {
    query: String,
    positive: String,
    #[serde(default)]
    negatives: Vec<String>,
}

/// Reads `{"query", "positive", "negatives"?}` lines and analyzes them.
pub fn load_train_data(path: &Path, analyzer: &Analyzer) -> Result<Vec<TrainInstance>> {
    let rows: Vec<(usize, TrainRecord)> = read_jsonl(path)?;
    rows.into_iter()
        .map(|(line, r)| {
            TrainInstance::new(
                analyzer.tokenize(&r.query),
                analyzer.tokenize(&r.positive),
                r.negatives.iter().map(|n| analyzer.tokenize(n)).collect(),
            )
            .map_err(|e| Error::parse(path, line, e.to_string()))
        })
        .collect()
}

/// Interns every token of `data` in first-seen order.
pub fn build_dictionary(data: &[TrainInstance]) -> TermDictionary {
    let mut dict = TermDictionary::new();
    for inst in data {
        for t in inst.query.iter().chain(&inst.positive).chain(inst.negatives.iter().flatten()) {
            dict.intern(t);
        }
    }
    dict
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub shared_encoder: bool,
    pub dim: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { learning_rate: 0.1, epochs: 10, batch_size: 8, seed: 0, shared_encoder: true, dim: 16 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::invalid(format!("learning rate must be finite and >= 0, got {}", self.learning_rate)));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be >= 1"));
        }
        if self.batch_size < 2 {
            return Err(Error::invalid(format!("batch size must be >= 2, got {}", self.batch_size)));
        }
        if self.dim < 2 {
            return Err(Error::invalid(format!("dim must be >= 2, got {}", self.dim)));
        }
        Ok(())
    }
}

/// −log softmax of the positive score against the negatives, with φ = ⟨·,·⟩.
pub fn dpr_loss(q: &DenseVector, pos: &DenseVector, negs: &[DenseVector]) -> Result<f64> {
    if negs.is_empty() {
        return Err(Error::invalid("loss needs at least one negative"));
    }
    let mut scores = Vec::with_capacity(negs.len() + 1);
    scores.push(crate::reprs::inner_product_dense(q, pos)?);
    for n in negs {
        scores.push(crate::reprs::inner_product_dense(q, n)?);
    }
    Ok(softmax_loss(&scores))
}

/// −log softmax(scores)[0], stabilized by subtracting the maximum.
fn softmax_loss(scores: &[f64]) -> f64 {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = scores.iter().map(|s| (s - m).exp()).sum();
    (m - scores[0]) + z.ln()
}

/// A document within a batch: an instance's positive or one of its explicit
/// negatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DocRef {
    Positive(usize),
    Explicit { instance: usize, index: usize },
}

/// Negatives of query i: positives of every other instance in batch order,
/// then i's explicit negatives.
pub fn in_batch_negatives(batch: &[TrainInstance]) -> Result<Vec<Vec<DocRef>>> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let out: Vec<Vec<DocRef>> = (0..batch.len())
        .map(|i| {
            (0..batch.len())
                .filter(|&j| j != i)
                .map(DocRef::Positive)
                .chain((0..batch[i].negatives.len()).map(|index| DocRef::Explicit { instance: i, index }))
                .collect()
        })
        .collect();
    if out.iter().any(Vec::is_empty) {
        return Err(Error::invalid("a batch of one needs explicit negatives"));
    }
    Ok(out)
}

/// Term ids of one instance, OOV tokens dropped.
#[derive(Debug, Clone)]
struct Encoded {
    query: Vec<TermId>,
    positive: Vec<TermId>,
    negatives: Vec<Vec<TermId>>,
}

fn encode_instance(dict: &TermDictionary, inst: &TrainInstance) -> Result<Encoded> {
    let ids = |toks: &[String]| -> Vec<TermId> { toks.iter().filter_map(|t| dict.get(t)).collect() };
    let e = Encoded {
        query: ids(&inst.query),
        positive: ids(&inst.positive),
        negatives: inst.negatives.iter().map(|n| ids(n)).collect(),
    };
    if e.query.is_empty() || e.positive.is_empty() || e.negatives.iter().any(Vec::is_empty) {
        return Err(Error::data("training text has no in-vocabulary tokens"));
    }
    Ok(e)
}

fn doc_ids<'a>(batch: &'a [Encoded], r: DocRef) -> &'a [TermId] {
    match r {
        DocRef::Positive(i) => &batch[i].positive,
        DocRef::Explicit { instance, index } => &batch[instance].negatives[index],
    }
}

/// Gradient tables, shaped like the model's embedding tables.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub query: Vec<f64>,
    /// Present only when the document encoder is separate.
    pub doc: Option<Vec<f64>>,
}

/// Per-instance loss plus the gradients with respect to the pooled query
/// vector and to each pooled document vector it was scored against.
struct InstanceGrad {
    loss: f64,
    d_query: Vec<f64>,
    d_docs: Vec<(DocRef, Vec<f64>)>,
}

fn instance_grad(model: &ToyModel, batch: &[Encoded], i: usize, negs: &[DocRef]) -> Result<InstanceGrad> {
    let q = model.query.encode_ids(&batch[i].query)?;
    let docs: Vec<DocRef> = std::iter::once(DocRef::Positive(i)).chain(negs.iter().copied()).collect();
    let reps: Vec<DenseVector> =
        docs.iter().map(|&r| model.doc_encoder().encode_ids(doc_ids(batch, r))).collect::<Result<_>>()?;
    let scores: Vec<f64> = reps.iter().map(|d| crate::reprs::dot(q.values(), d.values())).collect();
    let loss = softmax_loss(&scores);

    // dL/ds_j = softmax_j − [j = positive]
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    let coef: Vec<f64> = exps.iter().enumerate().map(|(j, e)| e / z - if j == 0 { 1.0 } else { 0.0 }).collect();

    let dim = q.dim();
    let mut d_query = vec![0.0; dim];
    for (c, d) in coef.iter().zip(&reps) {
        for (g, x) in d_query.iter_mut().zip(d.values()) {
            *g += c * x;
        }
    }
    let d_docs = docs.into_iter().zip(&coef).map(|(r, c)| (r, q.values().iter().map(|x| c * x).collect())).collect();
    Ok(InstanceGrad { loss, d_query, d_docs })
}

/// Spreads a pooled-vector gradient onto the rows of the pooled terms.
fn scatter(table: &mut [f64], dim: usize, terms: &[TermId], grad: &[f64], scale: f64) {
    let w = scale / terms.len() as f64;
    for &t in terms {
        let row = &mut table[t as usize * dim..(t as usize + 1) * dim];
        for (r, g) in row.iter_mut().zip(grad) {
            *r += w * g;
        }
    }
}

fn batch_terms(model: &ToyModel, batch: &[TrainInstance]) -> Result<Vec<Encoded>> {
    batch.iter().map(|inst| encode_instance(&model.dict, inst)).collect()
}

/// Mean loss of `batch` under the given negative assignments.
pub fn batch_loss(model: &ToyModel, batch: &[TrainInstance], assignments: &[Vec<DocRef>]) -> Result<f64> {
    Ok(batch_loss_and_gradient(model, batch, assignments, Execution::Sequential)?.0)
}

/// Exact gradient of the mean batch loss with respect to every embedding entry.
pub fn loss_gradient(
    model: &ToyModel,
    batch: &[TrainInstance],
    assignments: &[Vec<DocRef>],
    exec: Execution,
) -> Result<Gradient> {
    Ok(batch_loss_and_gradient(model, batch, assignments, exec)?.1)
}

fn batch_loss_and_gradient(
    model: &ToyModel,
    batch: &[TrainInstance],
    assignments: &[Vec<DocRef>],
    exec: Execution,
) -> Result<(f64, Gradient)> {
    if assignments.len() != batch.len() {
        return Err(Error::DimensionMismatch { expected: batch.len(), actual: assignments.len() });
    }
    let encoded = batch_terms(model, batch)?;
    let per: Vec<InstanceGrad> = exec
        .map_range(batch.len(), |i| instance_grad(model, &encoded, i, &assignments[i]))
        .into_iter()
        .collect::<Result<_>>()?;

    let dim = model.dim();
    let mut gq = vec![0.0; model.query.table().len()];
    let mut gd = model.doc.as_ref().map(|d| vec![0.0; d.table().len()]);
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    // Fixed reduction order keeps the result independent of execution mode.
    for (i, g) in per.iter().enumerate() {
        loss += g.loss;
        scatter(&mut gq, dim, &encoded[i].query, &g.d_query, scale);
        for (r, d) in &g.d_docs {
            let target = gd.as_mut().unwrap_or(&mut gq);
            scatter(target, dim, doc_ids(&encoded, *r), d, scale);
        }
    }
    Ok((loss * scale, Gradient { query: gq, doc: gd }))
}

fn sgd_step(enc: &mut ToyEncoder, grad: &[f64], lr: f64) {
    for (w, g) in enc.table_mut().iter_mut().zip(grad) {
        *w -= lr * g;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean per-instance loss over each epoch, measured before each update.
    pub epoch_losses: Vec<f64>,
}

/// Splits a shuffled order into batches; a trailing batch of one is merged
/// into its predecessor so every query has in-batch negatives.
fn batches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(size).collect();
    if out.len() >= 2 && out.last().map(|b| b.len()) == Some(1) {
        out.pop();
        let n = out.len();
        let start = (n - 1) * size;
        out[n - 1] = &order[start..];
    }
    out
}

/// Trains a fresh model over `dict` with seeded-shuffle mini-batch SGD.
pub fn train(
    config: &TrainConfig,
    data: &[TrainInstance],
    dict: TermDictionary,
    exec: Execution,
) -> Result<(ToyModel, TrainReport)> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::data("no training data"));
    }
    let mut model = ToyModel::init(dict, config.dim, config.shared_encoder, config.seed)?;
    for inst in data {
        encode_instance(&model.dict, inst)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for idx in batches(&order, config.batch_size) {
            let batch: Vec<TrainInstance> = idx.iter().map(|&i| data[i].clone()).collect();
            let assignments = in_batch_negatives(&batch)?;
            let (loss, grad) = batch_loss_and_gradient(&model, &batch, &assignments, exec)?;
            total += loss * batch.len() as f64;
            sgd_step(&mut model.query, &grad.query, config.learning_rate);
            if let (Some(doc), Some(g)) = (model.doc.as_mut(), grad.doc.as_ref()) {
                sgd_step(doc, g, config.learning_rate);
            }
        }
        epoch_losses.push(total / data.len() as f64);
    }
    Ok((model, TrainReport { epoch_losses }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn inst(q: &str, p: &str, negs: &[&str]) -> TrainInstance {
        TrainInstance::new(toks(q), toks(p), negs.iter().map(|n| toks(n)).collect()).unwrap()
    }

    fn dv(v: &[f64]) -> DenseVector {
        DenseVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn loss_closed_forms() {
        let z = dv(&[0.0, 0.0]);
        for n in [1usize, 3, 7] {
            let loss = dpr_loss(&z, &z, &vec![z.clone(); n]).unwrap();
            assert!((loss - ((n + 1) as f64).ln()).abs() < 1e-12);
        }
        let q = dv(&[1.0, 0.0]);
        let loss = dpr_loss(&q, &dv(&[1.0, 0.0]), &[dv(&[0.0, 1.0])]).unwrap();
        assert!((loss - (1.0 + (-1.0f64).exp()).ln()).abs() < 1e-15);
        assert!((loss - 0.31326).abs() < 1e-5);
        assert!(dpr_loss(&q, &q, &[]).is_err());
        assert!(dpr_loss(&q, &q, &[dv(&[1.0, 2.0, 3.0])]).is_err());
    }

    #[test]
    fn loss_decreases_in_positive_score() {
        let neg = [dv(&[0.0, 1.0])];
        let mut prev = f64::INFINITY;
        for s in [0.0, 1.0, 5.0, 20.0, 30.0] {
            let l = dpr_loss(&dv(&[1.0, 0.0]), &dv(&[s, 0.0]), &neg).unwrap();
            assert!(l >= 0.0 && l < prev);
            prev = l;
        }
        assert!(prev < 1e-12);
    }

    #[test]
    fn negative_assignment() {
        let b = vec![inst("q1", "d1", &[]), inst("q2", "d2", &[])];
        assert_eq!(in_batch_negatives(&b).unwrap(), vec![vec![DocRef::Positive(1)], vec![DocRef::Positive(0)]]);
        let b4: Vec<_> = (0..4).map(|i| inst(&format!("q{i}"), &format!("d{i}"), &[])).collect();
        assert!(in_batch_negatives(&b4).unwrap().iter().all(|n| n.len() == 3));
        let b = vec![inst("q1", "d1", &["x"]), inst("q2", "d2", &[])];
        assert_eq!(
            in_batch_negatives(&b).unwrap()[0],
            vec![DocRef::Positive(1), DocRef::Explicit { instance: 0, index: 0 }]
        );
        assert!(in_batch_negatives(&[inst("q", "d", &[])]).is_err());
        assert_eq!(in_batch_negatives(&[inst("q", "d", &["n"])]).unwrap()[0].len(), 1);
    }

    #[test]
    fn untouched_rows_have_zero_gradient() {
        let data = vec![inst("a b", "c", &[]), inst("d", "e f", &[])];
        let mut dict = build_dictionary(&data);
        let spare = dict.intern("unused");
        let model = ToyModel::init(dict, 4, true, 3).unwrap();
        let g = loss_gradient(&model, &data, &in_batch_negatives(&data).unwrap(), Execution::Sequential).unwrap();
        let row = &g.query[spare as usize * 4..(spare as usize + 1) * 4];
        assert!(row.iter().all(|&x| x == 0.0));
        assert!(g.query.iter().any(|&x| x != 0.0));
    }

    #[test]
    fn batching_merges_singleton_tail() {
        let order: Vec<usize> = (0..5).collect();
        let b = batches(&order, 2);
        assert_eq!(b, vec![&[0, 1][..], &[2, 3, 4][..]]);
        assert_eq!(batches(&order[..4], 2).len(), 2);
        assert_eq!(batches(&order[..1], 2), vec![&[0][..]]);
    }

    #[test]
    fn zero_rate_and_determinism() {
        let data: Vec<_> = (0..6).map(|i| inst(&format!("q{i} m{}", i % 3), &format!("d{i} m{}", i % 3), &[])).collect();
        let cfg = TrainConfig { learning_rate: 0.0, epochs: 2, batch_size: 3, ..TrainConfig::default() };
        let (m, _) = train(&cfg, &data, build_dictionary(&data), Execution::Sequential).unwrap();
        let init = ToyModel::init(build_dictionary(&data), cfg.dim, true, cfg.seed).unwrap();
        assert_eq!(m, init);

        let cfg = TrainConfig { learning_rate: 0.5, epochs: 3, batch_size: 4, shared_encoder: false, ..cfg };
        let (a, ra) = train(&cfg, &data, build_dictionary(&data), Execution::Sequential).unwrap();
        let (b, rb) = train(&cfg, &data, build_dictionary(&data), Execution::default()).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        assert_eq!(ra, rb);
    }

    #[test]
    fn config_validation() {
        let data = vec![inst("a", "b", &[])];
        let bad = [
            TrainConfig { batch_size: 1, ..TrainConfig::default() },
            TrainConfig { epochs: 0, ..TrainConfig::default() },
            TrainConfig { learning_rate: f64::NAN, ..TrainConfig::default() },
        ];
        for cfg in bad {
            assert!(train(&cfg, &data, build_dictionary(&data), Execution::Sequential).is_err());
        }
        assert!(train(&TrainConfig::default(), &[], TermDictionary::new(), Execution::Sequential).is_err());
        assert!(TrainInstance::new(vec![], toks("x"), vec![]).is_err());
    }
}
