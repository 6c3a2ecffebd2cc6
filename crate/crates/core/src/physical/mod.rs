//! Physical retrieval models: exact brute force, a compressed inverted index
//! with document-at-a-time traversal, and an HNSW graph.

pub mod brute;
pub mod cross;
pub mod hnsw;
pub mod inverted;
pub mod postings;

pub use brute::BruteForceIndex;
pub use cross::{cross_execute, BackendConfig, BackendKind, CrossOutput, Profile};
pub use hnsw::{HnswIndex, HnswParams, Metric};
pub use inverted::InvertedIndex;

use crate::error::{Error, Result};

pub const DEFAULT_EF_SEARCH: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchBudget {
    pub k: usize,
    /// Beam width for HNSW layer-0 search; other backends ignore it.
    pub ef_search: usize,
}

impl SearchBudget {
    pub fn new(k: usize) -> Result<Self> {
        Self::with_ef(k, DEFAULT_EF_SEARCH.max(k))
    }

    pub fn with_ef(k: usize, ef_search: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if ef_search < k {
            return Err(Error::invalid(format!("ef_search ({ef_search}) must be >= k ({k})")));
        }
        Ok(SearchBudget { k, ef_search })
    }
}

/// Work counters reported alongside a search.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SearchStats {
    /// Postings whose weight entered a score (inverted index), documents
    /// scored (brute force) or similarity evaluations (HNSW).
    pub work: u64,
}
