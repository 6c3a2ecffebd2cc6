//! Query and document encoders (the η functions of a scoring model) and the
//! JSONL exchange formats they read and write.

pub mod dense;
pub mod sparse;

use std::collections::HashSet;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One corpus or query record: `{"id": ..., "contents": ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub contents: String,
}

impl Document {
    pub fn new(id: impl Into<String>, contents: impl Into<String>) -> Self {
        Document { id: id.into(), contents: contents.into() }
    }
}

/// Parses a JSONL file, skipping blank lines. Errors carry 1-based line numbers.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        out.push((i + 1, value));
    }
    Ok(out)
}

/// Loads a corpus (or query set); ids must be unique.
pub fn load_documents(path: &Path) -> Result<Vec<Document>> {
    let rows: Vec<(usize, Document)> = read_jsonl(path)?;
    let mut seen = HashSet::new();
    let mut docs = Vec::with_capacity(rows.len());
    for (line, doc) in rows {
        if !seen.insert(doc.id.clone()) {
            return Err(Error::parse(path, line, format!("duplicate id '{}'", doc.id)));
        }
        docs.push(doc);
    }
    Ok(docs)
}

pub fn write_documents(path: &Path, docs: &[Document]) -> Result<()> {
    let mut out = String::new();
    for d in docs {
        out.push_str(&serde_json::to_string(d).expect("document serializes"));
        out.push('\n');
    }
    crate::binio::write_file_atomic(path, out.as_bytes())
}
