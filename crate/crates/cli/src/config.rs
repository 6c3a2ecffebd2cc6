use std::cell::RefCell;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::CliError;

pub const KEYS: &[&str] = &[
    // model
    "model",
    "comparison",
    "corpus",
    "queries",
    "k1",
    "b",
    "bits",
    "lowercase",
    "stopwords",
    "expansions",
    "doc_vectors",
    "query_vectors",
    "toy_model",
    // physical
    "backend",
    "backends",
    "index",
    "hnsw_m",
    "hnsw_ef_construction",
    "ef_search",
    // run control
    "k",
    "seed",
    "execution",
    "tag",
    "output",
    "corpus_name",
    // training
    "train_data",
    "learning_rate",
    "epochs",
    "batch_size",
    "dim",
    "shared_encoder",
    // fusion, rerank, eval
    "run_a",
    "run_b",
    "alpha",
    "normalization",
    "first_stage",
    "depth",
    "carry_first_stage_score",
    "run",
    "qrels",
    "metrics",
];

/// Line-oriented `key = value` job configuration.
///
/// Every lookup is recorded, default or not, so the resolved configuration
/// can be written into output headers.
#[derive(Debug)]
pub struct Config {
    values: BTreeMap<String, String>,
    base: PathBuf,
    used: RefCell<BTreeMap<String, String>>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Relative paths resolve against `base`.
    pub fn parse(text: &str, base: PathBuf) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Config(format!("line {}: expected `key = value`", i + 1)));
            };
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(CliError::Config(format!("line {}: unknown key '{key}'", i + 1)));
            }
            if values.insert(key.to_string(), value.to_string()).is_some() {
                return Err(CliError::Config(format!("line {}: duplicate key '{key}'", i + 1)));
            }
        }
        Ok(Config { values, base, used: RefCell::new(BTreeMap::new()) })
    }

    /// Command-line flags take precedence over the file.
    pub fn set(&mut self, key: &str, value: impl ToString) {
        debug_assert!(KEYS.contains(&key));
        self.values.insert(key.to_string(), value.to_string());
    }

    fn record(&self, key: &str, value: &str) {
        self.used.borrow_mut().insert(key.to_string(), value.to_string());
    }

    pub fn has(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn opt_str(&self, key: &str) -> Option<String> {
        let v = self.values.get(key)?;
        self.record(key, v);
        Some(v.clone())
    }

    pub fn str_or(&self, key: &str, default: &str) -> String {
        let v = self.values.get(key).map(String::as_str).unwrap_or(default);
        self.record(key, v);
        v.to_string()
    }

    pub fn require_str(&self, key: &str) -> Result<String, CliError> {
        self.opt_str(key).ok_or_else(|| CliError::Config(format!("missing required key '{key}'")))
    }

    pub fn opt_parse<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match self.opt_str(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|e| CliError::Config(format!("bad value for '{key}' ({v}): {e}"))),
        }
    }

    pub fn parse_or<T: FromStr + ToString>(&self, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match self.opt_parse(key)? {
            Some(v) => Ok(v),
            None => {
                self.record(key, &default.to_string());
                Ok(default)
            }
        }
    }

    fn resolve(&self, raw: &str) -> PathBuf {
        let p = PathBuf::from(raw);
        if p.is_absolute() {
            p
        } else {
            self.base.join(p)
        }
    }

    /// An input file that must already exist.
    pub fn input_path(&self, key: &str) -> Result<PathBuf, CliError> {
        let p = self.resolve(&self.require_str(key)?);
        if !p.exists() {
            return Err(CliError::Config(format!("{key}: {} does not exist", p.display())));
        }
        Ok(p)
    }

    pub fn opt_input_path(&self, key: &str) -> Result<Option<PathBuf>, CliError> {
        if self.has(key) {
            self.input_path(key).map(Some)
        } else {
            Ok(None)
        }
    }

    pub fn output_path(&self) -> Result<PathBuf, CliError> {
        Ok(self.resolve(&self.require_str("output")?))
    }

    pub fn opt_output_path(&self) -> Option<PathBuf> {
        self.opt_str("output").map(|p| self.resolve(&p))
    }

    /// `reprir <command> key=value ...` over every key read so far, sorted.
    pub fn header(&self, command: &str) -> String {
        let mut out = format!("reprir {command}");
        for (k, v) in self.used.borrow().iter().filter(|(k, _)| k.as_str() != "output") {
            out.push_str(&format!(" {k}={v}"));
        }
        out
    }
}

pub fn parse_bool(key: &str, v: &str) -> Result<bool, CliError> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(CliError::Config(format!("bad value for '{key}' ({v}): expected true or false"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> Result<Config, CliError> {
        Config::parse(text, PathBuf::from("/base"))
    }

    #[test]
    fn parses_comments_and_whitespace() {
        let c = cfg("# job\nmodel = bm25\n\n  k1=1.2  \n").unwrap();
        assert_eq!(c.str_or("model", "x"), "bm25");
        assert_eq!(c.parse_or("k1", 0.9).unwrap(), 1.2);
        assert_eq!(c.parse_or("b", 0.4).unwrap(), 0.4);
    }

    #[test]
    fn rejects_unknown_duplicate_and_malformed_lines() {
        assert!(matches!(cfg("modle = bm25"), Err(CliError::Config(m)) if m.contains("unknown key 'modle'")));
        assert!(cfg("k = 1\nk = 2").is_err());
        assert!(cfg("just words").is_err());
    }

    #[test]
    fn bad_values_are_config_errors() {
        let c = cfg("k = ten").unwrap();
        assert!(matches!(c.parse_or("k", 10usize), Err(CliError::Config(_))));
        assert!(parse_bool("lowercase", "maybe").is_err());
    }

    #[test]
    fn header_lists_resolved_keys_in_order() {
        let mut c = cfg("model = bm25\noutput = out.run").unwrap();
        c.set("k", 5);
        c.str_or("model", "x");
        c.parse_or("k", 10usize).unwrap();
        c.parse_or("b", 0.4).unwrap();
        c.output_path().unwrap();
        assert_eq!(c.header("search"), "reprir search b=0.4 k=5 model=bm25");
    }

    #[test]
    fn relative_paths_resolve_against_the_config_directory() {
        let c = cfg("output = runs/a.run").unwrap();
        assert_eq!(c.output_path().unwrap(), PathBuf::from("/base/runs/a.run"));
        let c = cfg("index = /nope/missing.sidx").unwrap();
        assert!(matches!(c.input_path("index"), Err(CliError::Config(_))));
    }
}
