use std::collections::HashSet;

use super::{SearchBudget, SearchStats};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::reprs::{ComparisonFunction, RankedList, Repr, TopK};

/// Scores every document for every query. Exact; serves as the oracle for
/// the other backends.
#[derive(Debug, Clone)]
pub struct BruteForceIndex {
    ids: Vec<String>,
    reprs: Vec<Repr>,
    comparison: ComparisonFunction,
}

impl BruteForceIndex {
    pub fn build(docs: Vec<(String, Repr)>, comparison: ComparisonFunction) -> Result<Self> {
        let mut seen = HashSet::with_capacity(docs.len());
        for (id, _) in &docs {
            if !seen.insert(id.as_str()) {
                return Err(Error::data(format!("duplicate doc id '{id}'")));
            }
        }
        let (ids, reprs) = docs.into_iter().unzip();
        Ok(BruteForceIndex { ids, reprs, comparison })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn comparison(&self) -> ComparisonFunction {
        self.comparison
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn reprs(&self) -> &[Repr] {
        &self.reprs
    }

    /// Approximate in-memory footprint of the stored representations.
    pub fn size_bytes(&self) -> usize {
        let reprs: usize = self
            .reprs
            .iter()
            .map(|r| match r {
                Repr::Sparse(v) => v.len() * 12,
                Repr::Dense(v) => v.dim() * 8,
                Repr::Multi(m) => m.rows().len() * m.dim() * 8,
            })
            .sum();
        reprs + self.ids.iter().map(String::len).sum::<usize>()
    }

    pub fn search(&self, query_id: &str, q: &Repr, budget: &SearchBudget) -> Result<(RankedList, SearchStats)> {
        let mut top = TopK::new(budget.k)?;
        for (id, d) in self.ids.iter().zip(&self.reprs) {
            top.push(self.comparison.compare(q, d)?, id);
        }
        let stats = SearchStats { work: self.ids.len() as u64 };
        Ok((top.into_ranked_list(query_id), stats))
    }

    /// Runs every query, in input order.
    pub fn search_batch(
        &self,
        queries: &[(String, Repr)],
        budget: &SearchBudget,
        exec: Execution,
    ) -> Result<Vec<RankedList>> {
        exec.try_map(queries, |(qid, q)| self.search(qid, q, budget).map(|(r, _)| r))
    }
}
