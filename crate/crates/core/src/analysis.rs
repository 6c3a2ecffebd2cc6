//! Text analysis: the token stream fed to every indexer and encoder, plus the
//! term dictionary that defines the vocabulary.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use crate::binio::{Reader, Writer};
use crate::error::{Error, Result};
use crate::reprs::TermId;

pub const MAX_TOKEN_CHARS: usize = 64;

/// Splits text into maximal runs of alphanumeric characters.
#[derive(Debug, Clone)]
pub struct Analyzer {
    pub lowercase: bool,
    stopwords: HashSet<String>,
}

impl Default for Analyzer {
    fn default() -> Self {
        Analyzer { lowercase: true, stopwords: HashSet::new() }
    }
}

impl Analyzer {
    pub fn new(lowercase: bool, stopwords: impl IntoIterator<Item = String>) -> Self {
        Analyzer { lowercase, stopwords: stopwords.into_iter().collect() }
    }

    /// Reads a stopword file (one term per line, blank lines ignored).
    pub fn load_stopwords(path: &Path) -> Result<HashSet<String>> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_lowercase).collect())
    }

    pub fn stopwords(&self) -> &HashSet<String> {
        &self.stopwords
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        text.split(|c: char| !c.is_alphanumeric())
            .filter(|run| !run.is_empty())
            .map(|run| {
                let token = if self.lowercase { run.to_lowercase() } else { run.to_string() };
                match token.char_indices().nth(MAX_TOKEN_CHARS) {
                    Some((cut, _)) => token[..cut].to_string(),
                    None => token,
                }
            })
            .filter(|t| !self.stopwords.contains(t))
            .collect()
    }
}

/// Bijective term ↔ dense id mapping. Ids are assigned in first-seen order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TermDictionary {
    ids: HashMap<String, TermId>,
    terms: Vec<String>,
}

impl TermDictionary {
    pub fn new() -> Self {
        TermDictionary::default()
    }

    pub fn intern(&mut self, term: &str) -> TermId {
        if let Some(&id) = self.ids.get(term) {
            return id;
        }
        let id = self.terms.len() as TermId;
        self.terms.push(term.to_string());
        self.ids.insert(term.to_string(), id);
        id
    }

    pub fn get(&self, term: &str) -> Option<TermId> {
        self.ids.get(term).copied()
    }

    pub fn term(&self, id: TermId) -> Option<&str> {
        self.terms.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub(crate) fn write(&self, w: &mut Writer) {
        w.u64(self.terms.len() as u64);
        for t in &self.terms {
            w.str(t);
        }
    }

    pub(crate) fn read(r: &mut Reader<'_>) -> Result<Self> {
        let n = r.len_prefix(4)?;
        let mut dict = TermDictionary::new();
        for _ in 0..n {
            let term = r.str()?;
            if dict.get(&term).is_some() {
                return Err(Error::Corrupt(format!("duplicate dictionary term '{term}'")));
            }
            dict.intern(&term);
        }
        Ok(dict)
    }
}
