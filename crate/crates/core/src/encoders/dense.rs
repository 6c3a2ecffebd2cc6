//! Dense encoders: file-backed vector stores and a small trainable
//! bag-of-embeddings encoder.

use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::read_jsonl;
use crate::analysis::TermDictionary;
use crate::binio::{read_file, write_file_atomic};
use crate::error::{Error, Result};
use crate::reprs::{DenseVector, TermId};

pub const DVEC_MAGIC: &[u8; 4] = b"DVEC";
pub const DVEC_VERSION: u32 = 1;
pub const TENC_MAGIC: &[u8; 4] = b"TENC";
pub const TENC_VERSION: u32 = 1;
pub const DEFAULT_TOY_DIM: usize = 16;

pub fn l2_normalize(v: &DenseVector) -> Result<DenseVector> {
    let norm = v.norm();
    if norm == 0.0 {
        return Err(Error::invalid("cannot normalize a zero vector"));
    }
    Ok(DenseVector::from_values_unchecked(v.values().iter().map(|x| x / norm).collect()))
}

/// Row-per-id store of 32-bit vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseStore {
    dim: usize,
    ids: Vec<String>,
    data: Vec<f32>,
    lookup: HashMap<String, usize>,
}

impl DenseStore {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dense store dim must be > 0"));
        }
        Ok(DenseStore { dim, ids: Vec::new(), data: Vec::new(), lookup: HashMap::new() })
    }

    pub fn push(&mut self, id: impl Into<String>, values: &[f32]) -> Result<()> {
        let id = id.into();
        if values.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, actual: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::data(format!("non-finite value in vector '{id}'")));
        }
        if self.lookup.contains_key(&id) {
            return Err(Error::data(format!("duplicate vector id '{id}'")));
        }
        self.lookup.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.data.extend_from_slice(values);
        Ok(())
    }

    /// Stores a double-precision vector, rounding to 32 bits.
    pub fn push_vector(&mut self, id: impl Into<String>, v: &DenseVector) -> Result<()> {
        let row: Vec<f32> = v.values().iter().map(|&x| x as f32).collect();
        self.push(id, &row)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.lookup.get(id).copied()
    }

    pub fn vector(&self, i: usize) -> DenseVector {
        DenseVector::from_values_unchecked(self.row(i).iter().map(|&x| x as f64).collect())
    }

    pub fn get(&self, id: &str) -> Option<DenseVector> {
        self.position(id).map(|i| self.vector(i))
    }

    pub fn size_bytes(&self) -> usize {
        self.data.len() * 4 + self.ids.iter().map(|s| s.len() + 4).sum::<usize>()
    }
}

#[derive(Serialize, Deserialize)]
struct DenseRecord {
    id: String,
    vector: Vec<f32>,
}

/// Loads `{"id": ..., "vector": [...]}` lines. All rows must share one dim,
/// which must equal `expected_dim` when given.
pub fn load_dense(path: &Path, expected_dim: Option<usize>) -> Result<DenseStore> {
    let rows: Vec<(usize, DenseRecord)> = read_jsonl(path)?;
    let dim = match (expected_dim, rows.first()) {
        (Some(d), _) => d,
        (None, Some((_, r))) => r.vector.len(),
        (None, None) => return Err(Error::data(format!("{}: no vectors", path.display()))),
    };
    let mut store = DenseStore::new(dim)?;
    for (line, rec) in rows {
        store.push(rec.id, &rec.vector).map_err(|e| Error::parse(path, line, e.to_string()))?;
    }
    Ok(store)
}

pub fn save_dense(path: &Path, store: &DenseStore) -> Result<()> {
    let mut out = String::new();
    for (i, id) in store.ids().iter().enumerate() {
        let rec = DenseRecord { id: id.clone(), vector: store.row(i).to_vec() };
        out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
        out.push('\n');
    }
    write_file_atomic(path, out.as_bytes())
}

/// Binary layout: "DVEC", version u32, rows u64, dim u32, then each id as
/// u32 length + UTF-8 bytes, then row-major f32 values. Little-endian.
pub fn dense_to_bytes(store: &DenseStore) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + store.data.len() * 4);
    out.extend_from_slice(DVEC_MAGIC);
    out.extend_from_slice(&DVEC_VERSION.to_le_bytes());
    out.extend_from_slice(&(store.len() as u64).to_le_bytes());
    out.extend_from_slice(&(store.dim as u32).to_le_bytes());
    for id in &store.ids {
        out.extend_from_slice(&(id.len() as u32).to_le_bytes());
        out.extend_from_slice(id.as_bytes());
    }
    for v in &store.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn dense_from_bytes(bytes: &[u8]) -> Result<DenseStore> {
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        let end = pos.checked_add(n).filter(|&e| e <= bytes.len()).ok_or_else(|| Error::Corrupt("truncated DVEC file".into()))?;
        let s = &bytes[pos..end];
        pos = end;
        Ok(s)
    };
    if take(4)? != DVEC_MAGIC {
        return Err(Error::Corrupt("bad DVEC magic".into()));
    }
    let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
    if version != DVEC_VERSION {
        return Err(Error::Corrupt(format!("unsupported DVEC version {version}")));
    }
    let rows = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let mut ids = Vec::with_capacity(rows.min(1 << 20));
    for _ in 0..rows {
        let len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let id = std::str::from_utf8(take(len)?).map_err(|_| Error::Corrupt("invalid UTF-8 id".into()))?;
        ids.push(id.to_string());
    }
    let floats = take(rows.checked_mul(dim).and_then(|n| n.checked_mul(4)).ok_or_else(|| Error::Corrupt("size overflow".into()))?)?;
    let values: Vec<f32> = floats.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    if pos != bytes.len() {
        return Err(Error::Corrupt("trailing bytes after DVEC data".into()));
    }
    let mut store = DenseStore::new(dim).map_err(|e| Error::Corrupt(e.to_string()))?;
    for (i, id) in ids.into_iter().enumerate() {
        store.push(id, &values[i * dim..(i + 1) * dim]).map_err(|e| Error::Corrupt(e.to_string()))?;
    }
    Ok(store)
}

pub fn save_dense_binary(path: &Path, store: &DenseStore) -> Result<()> {
    write_file_atomic(path, &dense_to_bytes(store))
}

pub fn load_dense_binary(path: &Path) -> Result<DenseStore> {
    dense_from_bytes(&read_file(path)?)
}

/// |V| × dim embedding table with mean pooling.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyEncoder {
    dim: usize,
    table: Vec<f64>,
}

impl ToyEncoder {
    pub fn zeros(vocab: usize, dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::invalid(format!("toy encoder dim must be >= 2, got {dim}")));
        }
        Ok(ToyEncoder { dim, table: vec![0.0; vocab * dim] })
    }

    /// Entries drawn uniformly from (−0.5/dim, 0.5/dim).
    pub fn random(vocab: usize, dim: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let mut enc = ToyEncoder::zeros(vocab, dim)?;
        let scale = 0.5 / dim as f64;
        for x in &mut enc.table {
            *x = rng.gen_range(-scale..scale);
        }
        Ok(enc)
    }

    pub fn from_table(vocab: usize, dim: usize, table: Vec<f64>) -> Result<Self> {
        if dim < 2 {
            return Err(Error::invalid(format!("toy encoder dim must be >= 2, got {dim}")));
        }
        if table.len() != vocab * dim {
            return Err(Error::DimensionMismatch { expected: vocab * dim, actual: table.len() });
        }
        if table.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("non-finite embedding entry"));
        }
        Ok(ToyEncoder { dim, table })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab(&self) -> usize {
        self.table.len() / self.dim
    }

    pub fn row(&self, term: TermId) -> &[f64] {
        let t = term as usize;
        &self.table[t * self.dim..(t + 1) * self.dim]
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn table_mut(&mut self) -> &mut [f64] {
        &mut self.table
    }

    /// Mean of the rows of `terms`; ids outside the table are ignored.
    pub fn encode_ids(&self, terms: &[TermId]) -> Result<DenseVector> {
        let mut acc = vec![0.0; self.dim];
        let mut n = 0usize;
        for &t in terms {
            if (t as usize) < self.vocab() {
                for (a, r) in acc.iter_mut().zip(self.row(t)) {
                    *a += r;
                }
                n += 1;
            }
        }
        if n == 0 {
            return Err(Error::data("no in-vocabulary tokens to encode"));
        }
        let inv = n as f64;
        Ok(DenseVector::from_values_unchecked(acc.into_iter().map(|a| a / inv).collect()))
    }
}

/// Dictionary plus query/document embedding tables. With `shared` the
/// document side reuses the query table.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    pub dict: TermDictionary,
    pub query: ToyEncoder,
    pub doc: Option<ToyEncoder>,
}

impl ToyModel {
    pub fn init(dict: TermDictionary, dim: usize, shared: bool, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let query = ToyEncoder::random(dict.len(), dim, &mut rng)?;
        let doc = if shared { None } else { Some(ToyEncoder::random(dict.len(), dim, &mut rng)?) };
        Ok(ToyModel { dict, query, doc })
    }

    pub fn is_shared(&self) -> bool {
        self.doc.is_none()
    }

    pub fn dim(&self) -> usize {
        self.query.dim()
    }

    pub fn doc_encoder(&self) -> &ToyEncoder {
        self.doc.as_ref().unwrap_or(&self.query)
    }

    pub fn term_ids(&self, tokens: &[String]) -> Vec<TermId> {
        tokens.iter().filter_map(|t| self.dict.get(t)).collect()
    }

    pub fn encode_query(&self, tokens: &[String]) -> Result<DenseVector> {
        toy_encode(&self.query, &self.term_ids(tokens))
    }

    pub fn encode_doc(&self, tokens: &[String]) -> Result<DenseVector> {
        toy_encode(self.doc_encoder(), &self.term_ids(tokens))
    }

    /// Layout: "TENC", version u32, |V| u64, dim u32, shared u8, then each
    /// term as u32 length + UTF-8, then the query table (and the document
    /// table when not shared) as little-endian f64.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(TENC_MAGIC);
        out.extend_from_slice(&TENC_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dict.len() as u64).to_le_bytes());
        out.extend_from_slice(&(self.dim() as u32).to_le_bytes());
        out.push(self.is_shared() as u8);
        for t in self.dict.terms() {
            out.extend_from_slice(&(t.len() as u32).to_le_bytes());
            out.extend_from_slice(t.as_bytes());
        }
        for enc in std::iter::once(&self.query).chain(self.doc.as_ref()) {
            for x in enc.table() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            let end = pos.checked_add(n).filter(|&e| e <= bytes.len()).ok_or_else(|| Error::Corrupt("truncated TENC file".into()))?;
            let s = &bytes[pos..end];
            pos = end;
            Ok(s)
        };
        if take(4)? != TENC_MAGIC {
            return Err(Error::Corrupt("bad TENC magic".into()));
        }
        let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
        if version != TENC_VERSION {
            return Err(Error::Corrupt(format!("unsupported TENC version {version}")));
        }
        let vocab = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        let dim = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let shared = match take(1)?[0] {
            0 => false,
            1 => true,
            other => return Err(Error::Corrupt(format!("bad shared flag {other}"))),
        };
        let mut dict = TermDictionary::new();
        for _ in 0..vocab {
            let len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
            let term = std::str::from_utf8(take(len)?).map_err(|_| Error::Corrupt("invalid UTF-8 term".into()))?;
            if dict.get(term).is_some() {
                return Err(Error::Corrupt(format!("duplicate term '{term}'")));
            }
            dict.intern(term);
        }
        let tables = if shared { 1 } else { 2 };
        let n = vocab.checked_mul(dim).ok_or_else(|| Error::Corrupt("size overflow".into()))?;
        let mut read_table = || -> Result<ToyEncoder> {
            let raw = take(n.checked_mul(8).ok_or_else(|| Error::Corrupt("size overflow".into()))?)?;
            let table = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            ToyEncoder::from_table(vocab, dim, table).map_err(|e| Error::Corrupt(e.to_string()))
        };
        let query = read_table()?;
        let doc = if tables == 2 { Some(read_table()?) } else { None };
        if pos != bytes.len() {
            return Err(Error::Corrupt("trailing bytes after TENC data".into()));
        }
        Ok(ToyModel { dict, query, doc })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        ToyModel::from_bytes(&read_file(path)?)
    }
}

/// Mean-pooled embedding of the in-vocabulary term ids.
pub fn toy_encode(enc: &ToyEncoder, terms: &[TermId]) -> Result<DenseVector> {
    enc.encode_ids(terms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn dv(v: &[f64]) -> DenseVector {
        DenseVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn normalize_examples() {
        let n = l2_normalize(&dv(&[3.0, 4.0])).unwrap();
        assert!((n.values()[0] - 0.6).abs() < 1e-15 && (n.values()[1] - 0.8).abs() < 1e-15);
        let u = dv(&[0.0, 1.0, 0.0]);
        assert_eq!(l2_normalize(&u).unwrap(), u);
        assert!(l2_normalize(&dv(&[0.0, 0.0])).is_err());
    }

    proptest! {
        #[test]
        fn normalize_unit_and_idempotent(v in proptest::collection::vec(-100.0f64..100.0, 1..32)) {
            prop_assume!(v.iter().any(|x| x.abs() > 1e-6));
            let n = l2_normalize(&dv(&v)).unwrap();
            let norm: f64 = n.values().iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!((norm - 1.0).abs() < 1e-9);
            let nn = l2_normalize(&n).unwrap();
            for (a, b) in n.values().iter().zip(nn.values()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn toy_encode_is_permutation_invariant(mut ids in proptest::collection::vec(0u32..10, 1..12), seed in any::<u64>()) {
            let enc = ToyEncoder::random(10, 4, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let a = toy_encode(&enc, &ids).unwrap();
            ids.reverse();
            let b = toy_encode(&enc, &ids).unwrap();
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!((x - y).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn toy_encode_examples() {
        let enc = ToyEncoder::from_table(3, 2, vec![1.0, 2.0, 3.0, 5.0, -1.0, 0.5]).unwrap();
        assert_eq!(toy_encode(&enc, &[1]).unwrap().values(), &[3.0, 5.0]);
        assert_eq!(toy_encode(&enc, &[1, 1]).unwrap().values(), &[3.0, 5.0]);
        let pair = toy_encode(&enc, &[0, 2]).unwrap();
        assert_eq!(pair.values(), &[(1.0 + -1.0) / 2.0, (2.0 + 0.5) / 2.0]);
        assert!(toy_encode(&enc, &[]).is_err());
        assert!(toy_encode(&enc, &[7]).is_err());
        assert!(ToyEncoder::zeros(3, 1).is_err());
    }

    #[test]
    fn dense_jsonl_examples() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.jsonl");
        std::fs::write(&p, "{\"id\":\"d1\",\"vector\":[0.0,1.0]}\n").unwrap();
        let s = load_dense(&p, None).unwrap();
        assert_eq!((s.len(), s.dim()), (1, 2));
        assert!(load_dense(&p, Some(3)).is_err());

        std::fs::write(&p, "{\"id\":\"a\",\"vector\":[0.0,1.0]}\n{\"id\":\"b\",\"vector\":[0.0,1.0,2.0]}\n").unwrap();
        assert!(matches!(load_dense(&p, None), Err(Error::Parse { line: 2, .. })));
        std::fs::write(&p, "{\"id\":\"a\",\"vector\":[0.0]}\n{\"id\":\"a\",\"vector\":[1.0]}\n").unwrap();
        assert!(load_dense(&p, None).is_err());
    }

    fn fixture_store(rows: usize, dim: usize, seed: u64) -> DenseStore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = DenseStore::new(dim).unwrap();
        for i in 0..rows {
            let row: Vec<f32> = (0..dim).map(|_| rng.gen_range(-10.0f32..10.0) * 1.37e-3).collect();
            s.push(format!("doc-{i}"), &row).unwrap();
        }
        s
    }

    #[test]
    fn dense_round_trips_are_bit_exact() {
        let store = fixture_store(100, 7, 3);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.jsonl");
        save_dense(&p, &store).unwrap();
        let back = load_dense(&p, Some(7)).unwrap();
        assert_eq!(back.ids(), store.ids());
        for i in 0..store.len() {
            let a: Vec<u32> = store.row(i).iter().map(|x| x.to_bits()).collect();
            let b: Vec<u32> = back.row(i).iter().map(|x| x.to_bits()).collect();
            assert_eq!(a, b);
        }
        let bin = dir.path().join("v.dvec");
        save_dense_binary(&bin, &store).unwrap();
        assert_eq!(load_dense_binary(&bin).unwrap(), store);
    }

    #[test]
    fn dense_binary_rejects_truncation() {
        let bytes = dense_to_bytes(&fixture_store(5, 3, 1));
        for cut in 0..bytes.len() {
            assert!(dense_from_bytes(&bytes[..cut]).is_err(), "cut {cut}");
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(dense_from_bytes(&bad).is_err());
    }

    #[test]
    fn toy_model_round_trip() {
        let mut dict = TermDictionary::new();
        for t in ["a", "b", "c"] {
            dict.intern(t);
        }
        for shared in [true, false] {
            let m = ToyModel::init(dict.clone(), 4, shared, 9).unwrap();
            let bytes = m.to_bytes();
            assert_eq!(ToyModel::from_bytes(&bytes).unwrap(), m);
            for cut in 0..bytes.len() {
                assert!(ToyModel::from_bytes(&bytes[..cut]).is_err());
            }
        }
    }
}
