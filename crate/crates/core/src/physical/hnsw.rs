//! Hierarchical navigable small-world graph for approximate top-k search
//! under inner product or cosine similarity.
//!
//! Construction inserts nodes one at a time in store order. Each node gets a
//! level `floor(-ln(U) * mL)` from the seeded generator, is linked to its
//! closest `M` candidates on every layer it occupies, and neighbors that
//! overflow (`M` on upper layers, `2M` on layer 0) keep their closest links.
//! When a link is dropped the reverse link is dropped too, so adjacency stays
//! symmetric.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{SearchBudget, SearchStats};
use crate::binio::{read_file, write_file_atomic, Reader, Writer};
use crate::encoders::dense::DenseStore;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::reprs::{DenseVector, RankedList, TopK};

pub const HIDX_MAGIC: &[u8; 4] = b"HIDX";
pub const HIDX_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    InnerProduct,
    Cosine,
}

impl Metric {
    fn tag(self) -> u8 {
        match self {
            Metric::InnerProduct => 0,
            Metric::Cosine => 1,
        }
    }

    fn from_tag(t: u8) -> Result<Self> {
        match t {
            0 => Ok(Metric::InnerProduct),
            1 => Ok(Metric::Cosine),
            other => Err(Error::Corrupt(format!("unknown metric tag {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HnswParams {
    pub m: usize,
    pub ef_construction: usize,
    pub metric: Metric,
    pub seed: u64,
}

impl Default for HnswParams {
    fn default() -> Self {
        HnswParams { m: 16, ef_construction: 200, metric: Metric::InnerProduct, seed: 0 }
    }
}

impl HnswParams {
    pub fn level_multiplier(&self) -> f64 {
        1.0 / (self.m as f64).ln()
    }

    fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::invalid(format!("HNSW M must be >= 2, got {}", self.m)));
        }
        if self.ef_construction < 1 {
            return Err(Error::invalid("ef_construction must be >= 1"));
        }
        Ok(())
    }

    fn max_degree(&self, layer: usize) -> usize {
        if layer == 0 {
            2 * self.m
        } else {
            self.m
        }
    }
}

/// (similarity, node) ordered by similarity, ties toward the lower node id.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Cand {
    sim: f64,
    node: u32,
}

impl Eq for Cand {}

impl Ord for Cand {
    fn cmp(&self, other: &Self) -> Ordering {
        self.sim.total_cmp(&other.sim).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Cand {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Per-search visited set, reset in O(1) by bumping the epoch.
struct Visited {
    marks: Vec<u32>,
    epoch: u32,
}

impl Visited {
    fn new(n: usize) -> Self {
        Visited { marks: vec![0; n], epoch: 0 }
    }

    fn reset(&mut self, n: usize) {
        if self.marks.len() < n {
            self.marks.resize(n, 0);
        }
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.marks.iter_mut().for_each(|m| *m = 0);
            self.epoch = 1;
        }
    }

    /// Marks `node`; returns false when it was already visited.
    fn insert(&mut self, node: u32) -> bool {
        let m = &mut self.marks[node as usize];
        if *m == self.epoch {
            false
        } else {
            *m = self.epoch;
            true
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HnswIndex {
    params: HnswParams,
    store: DenseStore,
    levels: Vec<u8>,
    /// layers[l][node]; empty for nodes whose level is below l.
    layers: Vec<Vec<Vec<u32>>>,
    entry: u32,
}

fn similarity(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

impl HnswIndex {
    /// Builds the graph. Under cosine the stored rows are unit-normalized.
    pub fn build(store: &DenseStore, params: HnswParams) -> Result<Self> {
        params.validate()?;
        if store.is_empty() {
            return Err(Error::invalid("cannot build HNSW over an empty store"));
        }
        let store = match params.metric {
            Metric::InnerProduct => store.clone(),
            Metric::Cosine => {
                let mut out = DenseStore::new(store.dim())?;
                for i in 0..store.len() {
                    let v = crate::encoders::dense::l2_normalize(&store.vector(i))
                        .map_err(|_| Error::data(format!("zero vector '{}' under cosine metric", store.ids()[i])))?;
                    out.push_vector(store.ids()[i].clone(), &v)?;
                }
                out
            }
        };
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let ml = params.level_multiplier();
        let levels: Vec<u8> = (0..store.len())
            .map(|_| {
                let u: f64 = 1.0 - rng.gen::<f64>();
                ((-u.ln() * ml).floor() as usize).min(u8::MAX as usize) as u8
            })
            .collect();
        let top = *levels.iter().max().unwrap() as usize;
        let layers = (0..=top).map(|_| vec![Vec::new(); store.len()]).collect();
        let mut index = HnswIndex { params, store, levels, layers, entry: 0 };
        let mut visited = Visited::new(index.store.len());
        for node in 1..index.store.len() as u32 {
            index.insert(node, &mut visited);
        }
        Ok(index)
    }

    fn sim(&self, a: u32, b: u32) -> f64 {
        similarity(self.store.row(a as usize), self.store.row(b as usize))
    }

    fn insert(&mut self, node: u32, visited: &mut Visited) {
        let level = self.levels[node as usize] as usize;
        let query = self.store.row(node as usize).to_vec();
        let top = self.levels[self.entry as usize] as usize;
        let mut ep = vec![Cand { sim: similarity(&query, self.store.row(self.entry as usize)), node: self.entry }];
        let mut evals = 0u64;
        for layer in (level + 1..=top).rev() {
            ep = self.search_layer(&query, &ep, 1, layer, visited, &mut evals);
        }
        for layer in (0..=level.min(top)).rev() {
            let found = self.search_layer(&query, &ep, self.params.ef_construction, layer, visited, &mut evals);
            let neighbors: Vec<u32> = found.iter().take(self.params.m).map(|c| c.node).collect();
            for &n in &neighbors {
                self.layers[layer][node as usize].push(n);
                self.layers[layer][n as usize].push(node);
                self.shrink(n, layer);
            }
            ep = found;
        }
        if level > top {
            self.entry = node;
        }
    }

    /// Trims `node`'s links on `layer` to its closest `max_degree`, removing
    /// the reverse link of every dropped neighbor.
    fn shrink(&mut self, node: u32, layer: usize) {
        let cap = self.params.max_degree(layer);
        if self.layers[layer][node as usize].len() <= cap {
            return;
        }
        let mut cands: Vec<Cand> =
            self.layers[layer][node as usize].iter().map(|&n| Cand { sim: self.sim(node, n), node: n }).collect();
        cands.sort_by(|a, b| b.cmp(a));
        let dropped: Vec<u32> = cands[cap..].iter().map(|c| c.node).collect();
        self.layers[layer][node as usize] = cands[..cap].iter().map(|c| c.node).collect();
        for d in dropped {
            self.layers[layer][d as usize].retain(|&x| x != node);
        }
    }

    /// Best-first beam search on one layer; returns up to `ef` candidates,
    /// best first.
    fn search_layer(
        &self,
        query: &[f32],
        entry: &[Cand],
        ef: usize,
        layer: usize,
        visited: &mut Visited,
        evals: &mut u64,
    ) -> Vec<Cand> {
        visited.reset(self.store.len());
        let mut frontier: BinaryHeap<Cand> = BinaryHeap::new();
        let mut found: BinaryHeap<Reverse<Cand>> = BinaryHeap::new();
        for &c in entry {
            if visited.insert(c.node) {
                frontier.push(c);
                found.push(Reverse(c));
                if found.len() > ef {
                    found.pop();
                }
            }
        }
        while let Some(c) = frontier.pop() {
            let worst = found.peek().expect("nonempty").0;
            if c < worst && found.len() >= ef {
                break;
            }
            for &n in &self.layers[layer][c.node as usize] {
                if !visited.insert(n) {
                    continue;
                }
                *evals += 1;
                let cand = Cand { sim: similarity(query, self.store.row(n as usize)), node: n };
                if found.len() < ef || cand > found.peek().unwrap().0 {
                    frontier.push(cand);
                    found.push(Reverse(cand));
                    if found.len() > ef {
                        found.pop();
                    }
                }
            }
        }
        let mut out: Vec<Cand> = found.into_iter().map(|r| r.0).collect();
        out.sort_by(|a, b| b.cmp(a));
        out
    }

    pub fn search(&self, query_id: &str, q: &DenseVector, budget: &SearchBudget) -> Result<(RankedList, SearchStats)> {
        if q.dim() != self.store.dim() {
            return Err(Error::DimensionMismatch { expected: self.store.dim(), actual: q.dim() });
        }
        let mut query: Vec<f32> = q.values().iter().map(|&x| x as f32).collect();
        if self.params.metric == Metric::Cosine {
            let norm = q.norm();
            if norm == 0.0 {
                return Err(Error::invalid("zero query vector under cosine metric"));
            }
            query = q.values().iter().map(|&x| (x / norm) as f32).collect();
        }
        let mut visited = Visited::new(self.store.len());
        let mut evals = 1u64;
        let mut ep = vec![Cand { sim: similarity(&query, self.store.row(self.entry as usize)), node: self.entry }];
        let top = self.levels[self.entry as usize] as usize;
        for layer in (1..=top).rev() {
            ep = self.search_layer(&query, &ep, 1, layer, &mut visited, &mut evals);
        }
        let found = self.search_layer(&query, &ep, budget.ef_search.max(budget.k), 0, &mut visited, &mut evals);
        let mut topk = TopK::new(budget.k)?;
        for c in &found {
            topk.push(c.sim, &self.store.ids()[c.node as usize]);
        }
        Ok((topk.into_ranked_list(query_id), SearchStats { work: evals }))
    }

    pub fn search_batch(
        &self,
        queries: &[(String, DenseVector)],
        budget: &SearchBudget,
        exec: Execution,
    ) -> Result<Vec<RankedList>> {
        exec.try_map(queries, |(id, q)| self.search(id, q, budget).map(|(r, _)| r))
    }

    pub fn params(&self) -> &HnswParams {
        &self.params
    }

    pub fn store(&self) -> &DenseStore {
        &self.store
    }

    pub fn len(&self) -> usize {
        self.store.len()
    }

    pub fn is_empty(&self) -> bool {
        self.store.is_empty()
    }

    pub fn entry_point(&self) -> u32 {
        self.entry
    }

    pub fn level(&self, node: u32) -> usize {
        self.levels[node as usize] as usize
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn neighbors(&self, node: u32, layer: usize) -> &[u32] {
        self.layers.get(layer).map_or(&[], |l| &l[node as usize])
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u64(self.params.m as u64);
        w.u64(self.params.ef_construction as u64);
        w.u8(self.params.metric.tag());
        w.u64(self.params.seed);
        w.u32(self.store.dim() as u32);
        w.u64(self.store.len() as u64);
        for (i, id) in self.store.ids().iter().enumerate() {
            w.str(id);
            for &x in self.store.row(i) {
                w.f32(x);
            }
        }
        for &l in &self.levels {
            w.u8(l);
        }
        w.u32(self.entry);
        w.u32(self.layers.len() as u32);
        for layer in &self.layers {
            let mut buf = Vec::new();
            for adj in layer {
                crate::binio::write_varint(&mut buf, adj.len() as u64);
                for &n in adj {
                    crate::binio::write_varint(&mut buf, n as u64);
                }
            }
            w.bytes(&buf);
        }
        w.finish(HIDX_MAGIC, HIDX_VERSION)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open(bytes, HIDX_MAGIC, HIDX_VERSION)?;
        let params = HnswParams {
            m: r.u64()? as usize,
            ef_construction: r.u64()? as usize,
            metric: Metric::from_tag(r.u8()?)?,
            seed: r.u64()?,
        };
        params.validate().map_err(|e| Error::Corrupt(e.to_string()))?;
        let dim = r.u32()? as usize;
        let n = r.len_prefix(4 + dim * 4)?;
        let mut store = DenseStore::new(dim).map_err(|e| Error::Corrupt(e.to_string()))?;
        let mut row = vec![0f32; dim];
        for _ in 0..n {
            let id = r.str()?;
            for x in row.iter_mut() {
                *x = r.f32()?;
            }
            store.push(id, &row).map_err(|e| Error::Corrupt(e.to_string()))?;
        }
        let levels = (0..n).map(|_| r.u8()).collect::<Result<Vec<u8>>>()?;
        let entry = r.u32()?;
        let n_layers = r.u32()? as usize;
        let top = levels.iter().copied().max().unwrap_or(0) as usize;
        if n == 0 || entry as usize >= n || n_layers != top + 1 || levels[entry as usize] as usize != top {
            return Err(Error::Corrupt("inconsistent HNSW header".into()));
        }
        let mut layers = Vec::with_capacity(n_layers);
        for layer in 0..n_layers {
            let buf = r.bytes()?;
            let mut pos = 0;
            let mut adj_layer = Vec::with_capacity(n);
            for node in 0..n {
                let deg = crate::binio::read_varint(buf, &mut pos)? as usize;
                if deg > 0 && (levels[node] as usize) < layer {
                    return Err(Error::Corrupt(format!("node {node} has links above its level")));
                }
                let mut adj = Vec::with_capacity(deg.min(n));
                for _ in 0..deg {
                    let v = crate::binio::read_varint(buf, &mut pos)?;
                    if v as usize >= n {
                        return Err(Error::Corrupt(format!("neighbor {v} out of range")));
                    }
                    adj.push(v as u32);
                }
                adj_layer.push(adj);
            }
            if pos != buf.len() {
                return Err(Error::Corrupt("trailing adjacency bytes".into()));
            }
            layers.push(adj_layer);
        }
        r.expect_end()?;
        Ok(HnswIndex { params, store, levels, layers, entry })
    }

    pub fn persist(&self, path: &Path) -> Result<()> {
        write_file_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        HnswIndex::from_bytes(&read_file(path)?)
    }
}
