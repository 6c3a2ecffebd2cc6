//! Ranking metrics and TREC run / qrels files.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use indexmap::IndexMap;

use crate::binio::write_file_atomic;
use crate::error::{Error, Result};
use crate::reprs::{RankedList, ScoredDoc};

/// (query, doc) → graded relevance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Qrels {
    judgments: HashMap<String, HashMap<String, u32>>,
}

impl Qrels {
    pub fn new() -> Self {
        Qrels::default()
    }

    pub fn insert(&mut self, query_id: &str, doc_id: &str, grade: u32) -> Result<()> {
        let q = self.judgments.entry(query_id.to_string()).or_default();
        if q.insert(doc_id.to_string(), grade).is_some() {
            return Err(Error::data(format!("duplicate judgment ({query_id}, {doc_id})")));
        }
        Ok(())
    }

    pub fn grade(&self, query_id: &str, doc_id: &str) -> u32 {
        self.judgments.get(query_id).and_then(|q| q.get(doc_id)).copied().unwrap_or(0)
    }

    pub fn judged(&self, query_id: &str) -> Option<&HashMap<String, u32>> {
        self.judgments.get(query_id)
    }

    pub fn num_relevant(&self, query_id: &str) -> usize {
        self.judged(query_id).map_or(0, |q| q.values().filter(|&&g| g >= 1).count())
    }

    pub fn num_queries(&self) -> usize {
        self.judgments.len()
    }
}

/// Query id → ranked list, in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Run {
    lists: IndexMap<String, RankedList>,
}

impl Run {
    pub fn new() -> Self {
        Run::default()
    }

    pub fn from_lists(lists: impl IntoIterator<Item = RankedList>) -> Result<Self> {
        let mut run = Run::new();
        for l in lists {
            run.push(l)?;
        }
        Ok(run)
    }

    pub fn push(&mut self, list: RankedList) -> Result<()> {
        if self.lists.contains_key(&list.query_id) {
            return Err(Error::data(format!("duplicate query '{}' in run", list.query_id)));
        }
        self.lists.insert(list.query_id.clone(), list);
        Ok(())
    }

    pub fn get(&self, query_id: &str) -> Option<&RankedList> {
        self.lists.get(query_id)
    }

    pub fn lists(&self) -> impl Iterator<Item = &RankedList> {
        self.lists.values()
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }
}

/// Mean metric value plus how many run queries were evaluated or skipped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricValue {
    pub mean: f64,
    pub evaluated: usize,
    pub skipped: usize,
}

fn mean_over<F>(run: &Run, qrels: &Qrels, per_query: F) -> Result<MetricValue>
where
    F: Fn(&RankedList, &HashMap<String, u32>) -> Option<f64>,
{
    let (mut sum, mut evaluated, mut skipped) = (0.0, 0, 0);
    for list in run.lists() {
        match qrels.judged(&list.query_id).and_then(|j| per_query(list, j)) {
            Some(v) => {
                sum += v;
                evaluated += 1;
            }
            None => skipped += 1,
        }
    }
    if evaluated == 0 {
        return Err(Error::data("no run queries could be evaluated against the qrels"));
    }
    Ok(MetricValue { mean: sum / evaluated as f64, evaluated, skipped })
}

fn grade(j: &HashMap<String, u32>, doc: &str) -> u32 {
    j.get(doc).copied().unwrap_or(0)
}

pub fn reciprocal_rank(list: &RankedList, judged: &HashMap<String, u32>, k: usize) -> f64 {
    list.hits()
        .iter()
        .take(k)
        .position(|h| grade(judged, &h.doc_id) >= 1)
        .map_or(0.0, |i| 1.0 / (i + 1) as f64)
}

/// Mean reciprocal rank of the first relevant hit within the top `k`.
pub fn mrr_at_k(run: &Run, qrels: &Qrels, k: usize) -> Result<MetricValue> {
    mean_over(run, qrels, |l, j| Some(reciprocal_rank(l, j, k)))
}

pub fn recall_at_k(run: &Run, qrels: &Qrels, k: usize) -> Result<MetricValue> {
    mean_over(run, qrels, |l, j| {
        let total = j.values().filter(|&&g| g >= 1).count();
        if total == 0 {
            return None;
        }
        let found = l.hits().iter().take(k).filter(|h| grade(j, &h.doc_id) >= 1).count();
        Some(found as f64 / total as f64)
    })
}

fn gain(grade: u32) -> f64 {
    2f64.powi(grade as i32) - 1.0
}

fn discount(rank: usize) -> f64 {
    1.0 / ((rank + 1) as f64).log2()
}

pub fn ndcg_at_k(run: &Run, qrels: &Qrels, k: usize) -> Result<MetricValue> {
    mean_over(run, qrels, |l, j| {
        let mut ideal: Vec<u32> = j.values().copied().filter(|&g| g > 0).collect();
        ideal.sort_unstable_by(|a, b| b.cmp(a));
        let idcg: f64 = ideal.iter().take(k).enumerate().map(|(i, &g)| gain(g) * discount(i + 1)).sum();
        if idcg == 0.0 {
            return None;
        }
        let dcg: f64 = l.hits().iter().take(k).enumerate().map(|(i, h)| gain(grade(j, &h.doc_id)) * discount(i + 1)).sum();
        Some(dcg / idcg)
    })
}

/// Uncut average precision over the whole ranked list.
pub fn average_precision(run: &Run, qrels: &Qrels) -> Result<MetricValue> {
    mean_over(run, qrels, |l, j| {
        let total = j.values().filter(|&&g| g >= 1).count();
        if total == 0 {
            return None;
        }
        let mut hits = 0usize;
        let mut sum = 0.0;
        for (i, h) in l.hits().iter().enumerate() {
            if grade(j, &h.doc_id) >= 1 {
                hits += 1;
                sum += hits as f64 / (i + 1) as f64;
            }
        }
        Some(sum / total as f64)
    })
}

pub fn read_qrels(path: &Path) -> Result<Qrels> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_qrels(&text).map_err(|(line, msg)| Error::parse(path, line, msg))
}

/// Parses "query_id 0 doc_id grade" lines; errors carry 1-based line numbers.
pub fn parse_qrels(text: &str) -> std::result::Result<Qrels, (usize, String)> {
    let mut qrels = Qrels::new();
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let [qid, _iter, doc, grade] = fields[..] else {
            return Err((i + 1, format!("expected 4 fields, found {}", fields.len())));
        };
        let grade: u32 = grade.parse().map_err(|_| (i + 1, format!("bad relevance grade '{grade}'")))?;
        qrels.insert(qid, doc, grade).map_err(|e| (i + 1, e.to_string()))?;
    }
    Ok(qrels)
}

/// Formats a run as "query_id Q0 doc_id rank score tag" lines, preceded by
/// optional `#` comment lines.
pub fn format_run(run: &Run, tag: &str, comments: &[String]) -> String {
    let mut out = String::new();
    for c in comments {
        let _ = writeln!(out, "# {c}");
    }
    for list in run.lists() {
        for (i, h) in list.hits().iter().enumerate() {
            let _ = writeln!(out, "{} Q0 {} {} {:.6} {}", list.query_id, h.doc_id, i + 1, h.score, tag);
        }
    }
    out
}

pub fn write_run(path: &Path, run: &Run, tag: &str, comments: &[String]) -> Result<()> {
    write_file_atomic(path, format_run(run, tag, comments).as_bytes())
}

pub fn read_run(path: &Path) -> Result<Run> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_run(&text).map_err(|(line, msg)| Error::parse(path, line, msg))
}

/// Parses run lines; hits are ordered by their rank column. Lines starting
/// with `#` are comments.
pub fn parse_run(text: &str) -> std::result::Result<Run, (usize, String)> {
    let mut grouped: IndexMap<String, BTreeMap<u64, (usize, ScoredDoc)>> = IndexMap::new();
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        let [qid, _q0, doc, rank, score, _tag] = fields[..] else {
            return Err((i + 1, format!("expected 6 fields, found {}", fields.len())));
        };
        let rank: u64 = rank.parse().map_err(|_| (i + 1, format!("bad rank '{rank}'")))?;
        let score: f64 = score
            .parse()
            .ok()
            .filter(|s: &f64| s.is_finite())
            .ok_or_else(|| (i + 1, format!("bad score '{score}'")))?;
        let per_query = grouped.entry(qid.to_string()).or_default();
        if per_query.insert(rank, (i + 1, ScoredDoc::new(doc, score))).is_some() {
            return Err((i + 1, format!("duplicate rank {rank} for query {qid}")));
        }
    }
    let mut run = Run::new();
    for (qid, hits) in grouped {
        let first_line = hits.values().next().map_or(0, |(l, _)| *l);
        let list = RankedList::from_ranked(qid, hits.into_values().map(|(_, h)| h).collect())
            .map_err(|e| (first_line, e.to_string()))?;
        run.push(list).map_err(|e| (first_line, e.to_string()))?;
    }
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_of(qid: &str, docs: &[&str]) -> Run {
        let n = docs.len();
        let hits = docs.iter().enumerate().map(|(i, d)| ScoredDoc::new(*d, (n - i) as f64)).collect();
        Run::from_lists([RankedList::new(qid, hits).unwrap()]).unwrap()
    }

    fn qrels_of(qid: &str, rel: &[(&str, u32)]) -> Qrels {
        let mut q = Qrels::new();
        for &(d, g) in rel {
            q.insert(qid, d, g).unwrap();
        }
        q
    }

    #[test]
    fn mrr_examples() {
        let q = qrels_of("q", &[("r", 1)]);
        assert_eq!(mrr_at_k(&run_of("q", &["r", "a"]), &q, 10).unwrap().mean, 1.0);
        assert!((mrr_at_k(&run_of("q", &["a", "b", "r"]), &q, 10).unwrap().mean - 1.0 / 3.0).abs() < 1e-15);
        let docs: Vec<String> = (0..10).map(|i| format!("x{i}")).chain(["r".to_string()]).collect();
        let refs: Vec<&str> = docs.iter().map(String::as_str).collect();
        assert_eq!(mrr_at_k(&run_of("q", &refs), &q, 10).unwrap().mean, 0.0);
    }

    #[test]
    fn recall_examples() {
        let q = qrels_of("q", &[("r1", 1), ("r2", 1)]);
        assert_eq!(recall_at_k(&run_of("q", &["r1", "r2"]), &q, 2).unwrap().mean, 1.0);
        assert_eq!(recall_at_k(&run_of("q", &["a", "b"]), &q, 2).unwrap().mean, 0.0);
        assert_eq!(recall_at_k(&run_of("q", &["r1", "b", "r2"]), &q, 2).unwrap().mean, 0.5);
    }

    #[test]
    fn ndcg_examples() {
        let q = qrels_of("q", &[("a", 2), ("b", 1)]);
        assert!((ndcg_at_k(&run_of("q", &["a", "b", "c"]), &q, 10).unwrap().mean - 1.0).abs() < 1e-15);
        let single = qrels_of("q", &[("r", 1)]);
        let v = ndcg_at_k(&run_of("q", &["x", "r"]), &single, 10).unwrap().mean;
        assert!((v - 1.0 / 3f64.log2()).abs() < 1e-15);
        assert!((v - 0.63093).abs() < 1e-5);
        let empty = Run::from_lists([RankedList::empty("q")]).unwrap();
        assert_eq!(ndcg_at_k(&empty, &single, 10).unwrap().mean, 0.0);
    }

    #[test]
    fn ap_examples() {
        let one = qrels_of("q", &[("r", 1)]);
        assert_eq!(average_precision(&run_of("q", &["r", "x"]), &one).unwrap().mean, 1.0);
        let two = qrels_of("q", &[("r1", 1), ("r2", 1)]);
        let v = average_precision(&run_of("q", &["r1", "x", "r2"]), &two).unwrap().mean;
        assert!((v - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        assert_eq!(average_precision(&run_of("q", &["x"]), &two).unwrap().mean, 0.0);
    }

    #[test]
    fn skipped_queries_are_counted() {
        let mut run = run_of("q1", &["a"]);
        run.push(RankedList::new("q2", vec![ScoredDoc::new("a", 1.0)]).unwrap()).unwrap();
        let q = qrels_of("q1", &[("a", 1)]);
        let v = mrr_at_k(&run, &q, 10).unwrap();
        assert_eq!((v.mean, v.evaluated, v.skipped), (1.0, 1, 1));
        assert!(mrr_at_k(&run_of("zz", &["a"]), &q, 10).is_err());
        let zero = qrels_of("q1", &[("a", 0)]);
        let v = ndcg_at_k(&run_of("q1", &["a"]), &zero, 10);
        assert!(v.is_err());
    }

    #[test]
    fn trec_parsing() {
        let run = parse_run("# comment\nq1 Q0 d7 1 12.500000 tag\n").unwrap();
        assert_eq!(run.get("q1").unwrap().hits(), &[ScoredDoc::new("d7", 12.5)]);
        let q = parse_qrels("q1 0 d7 1\n").unwrap();
        assert_eq!(q.grade("q1", "d7"), 1);
        assert_eq!(parse_qrels("q1 0 d7\n").unwrap_err().0, 1);
        assert_eq!(parse_qrels("q1 0 d7 1\nq1 0 d7 2\n").unwrap_err().0, 2);
        assert_eq!(parse_run("q1 Q0 d7 1 1.0 t\nq1 Q0 d8 x 1.0 t\n").unwrap_err().0, 2);
        assert!(parse_run("q1 Q0 d7 1 1.0 t\nq1 Q0 d8 2 5.0 t\n").is_err());
    }

    #[test]
    fn format_matches_trec_layout() {
        let run = run_of("q1", &["d7", "d2"]);
        assert_eq!(
            format_run(&run, "tag", &["c".into()]),
            "# c\nq1 Q0 d7 1 2.000000 tag\nq1 Q0 d2 2 1.000000 tag\n"
        );
    }
}
