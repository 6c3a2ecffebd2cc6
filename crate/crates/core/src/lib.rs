//! Logical scoring models executed over interchangeable physical retrieval
//! backends.
//!
//! A [`model::LogicalScoringModel`] binds a query encoder, a document encoder
//! and a [`reprs::ComparisonFunction`]. Any model whose comparison is an inner
//! product can be executed by brute force, by an inverted index, or by an HNSW
//! graph; [`physical::cross_execute`] runs such a pairing and reports quality,
//! space and time side by side.

pub mod analysis;
pub mod binio;
pub mod encoders;
pub mod error;
pub mod eval;
pub mod exec;
pub mod model;
pub mod physical;
pub mod pipeline;
pub mod reprs;
pub mod trainer;

pub use error::{Error, Result};
pub use exec::Execution;
pub use reprs::{ComparisonFunction, DenseVector, MultiVector, RankedList, Repr, ScoredDoc, SparseVector};
