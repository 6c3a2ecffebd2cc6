//! Impact-carrying inverted index with exhaustive document-at-a-time
//! traversal and safe MaxScore pruning.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use super::postings::{Cursor, PostingList, PostingListBuilder, WeightCoding, END};
use super::{SearchBudget, SearchStats};
use crate::analysis::TermDictionary;
use crate::binio::{read_file, write_file_atomic, Reader, Writer};
use crate::error::{Error, Result};
use crate::reprs::{RankedList, SparseVector, TermId, TopK};

pub const SIDX_MAGIC: &[u8; 4] = b"SIDX";
pub const SIDX_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    dict: TermDictionary,
    doc_ids: Vec<String>,
    postings: Vec<PostingList>,
    coding: WeightCoding,
    /// Free-form build description (model name, parameters, ...).
    pub metadata: BTreeMap<String, String>,
}

/// Builds the index; document ordinals follow input order.
pub fn build_inverted_index<'a, I>(dict: TermDictionary, docs: I, coding: WeightCoding) -> Result<InvertedIndex>
where
    I: IntoIterator<Item = (&'a str, &'a SparseVector)>,
{
    let mut builders: Vec<PostingListBuilder> = (0..dict.len()).map(|_| PostingListBuilder::new(coding)).collect();
    let mut doc_ids = Vec::new();
    let mut seen = HashSet::new();
    for (ordinal, (id, v)) in docs.into_iter().enumerate() {
        if !seen.insert(id) {
            return Err(Error::data(format!("duplicate doc id '{id}'")));
        }
        let ordinal = u32::try_from(ordinal).ok().filter(|&o| o != END).ok_or_else(|| Error::data("too many documents"))?;
        for &(t, w) in v.entries() {
            let b = builders
                .get_mut(t as usize)
                .ok_or_else(|| Error::invalid(format!("term id {t} outside dictionary of {} terms", dict.len())))?;
            b.push(ordinal, w)?;
        }
        doc_ids.push(id.to_string());
    }
    Ok(InvertedIndex {
        dict,
        doc_ids,
        postings: builders.into_iter().map(PostingListBuilder::finish).collect(),
        coding,
        metadata: BTreeMap::new(),
    })
}

struct QueryTerm<'a> {
    cursor: Cursor<'a>,
    weight: f64,
    bound: f64,
    /// Position in ascending term-id order; scores are summed in this order.
    rank: usize,
}

impl InvertedIndex {
    pub fn dict(&self) -> &TermDictionary {
        &self.dict
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn num_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn coding(&self) -> WeightCoding {
        self.coding
    }

    pub fn postings(&self, term: TermId) -> Option<&PostingList> {
        self.postings.get(term as usize)
    }

    pub fn total_postings(&self) -> usize {
        self.postings.iter().map(PostingList::len).sum()
    }

    /// Cursors for the query's indexed terms, ascending by term id.
    fn query_terms(&self, q: &SparseVector) -> Vec<QueryTerm<'_>> {
        q.entries()
            .iter()
            .filter_map(|&(t, w)| self.postings.get(t as usize).filter(|p| !p.is_empty()).map(|p| (p, w)))
            .enumerate()
            .map(|(rank, (p, w))| QueryTerm {
                cursor: p.cursor(self.coding),
                weight: w,
                bound: (w * p.max_weight() as f64).max(w * p.min_weight() as f64).max(0.0),
                rank,
            })
            .collect()
    }

    /// Exhaustive document-at-a-time evaluation over every document sharing
    /// at least one term with `q`.
    pub fn daat_search(&self, query_id: &str, q: &SparseVector, budget: &SearchBudget) -> Result<(RankedList, SearchStats)> {
        let mut top = TopK::new(budget.k)?;
        let mut terms = self.query_terms(q);
        let mut work = 0u64;
        loop {
            let doc = terms.iter().map(|t| t.cursor.doc()).min().unwrap_or(END);
            if doc == END {
                break;
            }
            let mut score = 0.0;
            for t in terms.iter_mut().filter(|t| t.cursor.doc() == doc) {
                score += t.weight * t.cursor.weight();
                t.cursor.next();
                work += 1;
            }
            top.push(score, &self.doc_ids[doc as usize]);
        }
        Ok((top.into_ranked_list(query_id), SearchStats { work }))
    }

    /// MaxScore dynamic pruning. Returns exactly the [`daat_search`] result;
    /// only the work counter differs.
    ///
    /// [`daat_search`]: InvertedIndex::daat_search
    pub fn max_score_search(
        &self,
        query_id: &str,
        q: &SparseVector,
        budget: &SearchBudget,
    ) -> Result<(RankedList, SearchStats)> {
        let mut top = TopK::new(budget.k)?;
        let mut terms = self.query_terms(q);
        let n = terms.len();
        terms.sort_by(|a, b| a.bound.total_cmp(&b.bound).then(a.rank.cmp(&b.rank)));
        // cum[i] bounds the score of a document matching only terms[..=i].
        let cum: Vec<f64> = terms
            .iter()
            .scan(0.0, |acc, t| {
                *acc += t.bound;
                Some(*acc)
            })
            .collect();
        // Absorbs rounding differences between bound arithmetic and exact scores.
        let slack = 1e-9 * cum.last().copied().unwrap_or(0.0);
        let mut contrib = vec![0.0f64; n];
        let mut first_essential = 0;
        let mut work = 0u64;
        loop {
            if let Some(theta) = top.threshold() {
                while first_essential < n && cum[first_essential] + slack < theta {
                    first_essential += 1;
                }
            }
            if first_essential == n {
                break;
            }
            let doc = terms[first_essential..].iter().map(|t| t.cursor.doc()).min().unwrap_or(END);
            if doc == END {
                break;
            }
            let mut upper = if first_essential > 0 { cum[first_essential - 1] } else { 0.0 };
            for t in terms[first_essential..].iter_mut().filter(|t| t.cursor.doc() == doc) {
                let c = t.weight * t.cursor.weight();
                contrib[t.rank] = c;
                upper += c;
                t.cursor.next();
                work += 1;
            }
            let mut pruned = false;
            for t in terms[..first_essential].iter_mut().rev() {
                if top.threshold().is_some_and(|theta| upper + slack < theta) {
                    pruned = true;
                    break;
                }
                upper -= t.bound;
                t.cursor.seek(doc);
                if t.cursor.doc() == doc {
                    let c = t.weight * t.cursor.weight();
                    contrib[t.rank] = c;
                    upper += c;
                    work += 1;
                }
            }
            if !pruned {
                let score = contrib.iter().fold(0.0, |acc, c| acc + c);
                top.push(score, &self.doc_ids[doc as usize]);
            }
            contrib.iter_mut().for_each(|c| *c = 0.0);
        }
        Ok((top.into_ranked_list(query_id), SearchStats { work }))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u8(self.coding.tag());
        w.u64(self.metadata.len() as u64);
        for (k, v) in &self.metadata {
            w.str(k);
            w.str(v);
        }
        self.dict.write(&mut w);
        w.u64(self.doc_ids.len() as u64);
        for id in &self.doc_ids {
            w.str(id);
        }
        w.u64(self.postings.len() as u64);
        for p in &self.postings {
            let (len, docs, weights) = p.raw_parts();
            w.u32(len);
            w.bytes(docs);
            w.bytes(weights);
        }
        w.finish(SIDX_MAGIC, SIDX_VERSION)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open(bytes, SIDX_MAGIC, SIDX_VERSION)?;
        let coding = WeightCoding::from_tag(r.u8()?)?;
        let mut metadata = BTreeMap::new();
        for _ in 0..r.len_prefix(8)? {
            let k = r.str()?;
            metadata.insert(k, r.str()?);
        }
        let dict = TermDictionary::read(&mut r)?;
        let n_docs = r.len_prefix(4)?;
        let mut doc_ids = Vec::with_capacity(n_docs);
        let mut seen = HashSet::with_capacity(n_docs);
        for _ in 0..n_docs {
            let id = r.str()?;
            if !seen.insert(id.clone()) {
                return Err(Error::Corrupt(format!("duplicate doc id '{id}'")));
            }
            doc_ids.push(id);
        }
        let n_terms = r.len_prefix(12)?;
        if n_terms != dict.len() {
            return Err(Error::Corrupt(format!("{n_terms} postings lists for {} terms", dict.len())));
        }
        let mut postings = Vec::with_capacity(n_terms);
        for _ in 0..n_terms {
            let len = r.u32()?;
            let docs = r.bytes()?.to_vec();
            let weights = r.bytes()?.to_vec();
            let list = PostingList::from_raw(len, docs, weights, coding)?;
            if let Some(&(last, _)) = list.decode(coding).last() {
                if last as usize >= n_docs {
                    return Err(Error::Corrupt(format!("posting ordinal {last} beyond {n_docs} documents")));
                }
            }
            postings.push(list);
        }
        r.expect_end()?;
        Ok(InvertedIndex { dict, doc_ids, postings, coding, metadata })
    }

    pub fn persist(&self, path: &Path) -> Result<()> {
        write_file_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        InvertedIndex::from_bytes(&read_file(path)?)
    }
}
