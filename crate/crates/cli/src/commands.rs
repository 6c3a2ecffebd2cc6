use std::io::Write;
use std::time::Instant;

use reprir::binio::write_file_atomic;
use reprir::eval::{average_precision, mrr_at_k, ndcg_at_k, read_qrels, read_run, recall_at_k, write_run, MetricValue, Qrels, Run};
use reprir::physical::cross::{build_backend, cross_execute, BackendKind};
use reprir::pipeline::{fuse_runs, rerank_run, CorpusLookup, FusionConfig, RerankConfig};
use reprir::trainer::{build_dictionary, load_train_data, train, TrainConfig};
use reprir::Error;

use crate::config::{parse_bool, Config};
use crate::error::{data_error, CliError, CliResult};
use crate::models::{analyzer, backend_config, backend_kind, budget, execution, load_backend, load_model, persist_backend};

/// Result text goes to `output` when configured, otherwise to stdout.
fn emit(cfg: &Config, text: &str) -> CliResult<()> {
    match cfg.opt_output_path() {
        Some(p) => Ok(write_file_atomic(&p, text.as_bytes())?),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(|e| data_error(format!("stdout: {e}")))
        }
    }
}

pub fn index(cfg: &Config) -> CliResult<()> {
    let exec = execution(cfg)?;
    let loaded = load_model(cfg, exec)?;
    let kind = backend_kind(cfg)?;
    let bc = backend_config(cfg, kind)?;
    let output = cfg.output_path()?;
    let started = Instant::now();
    let encoded = loaded.model.encode_documents(&loaded.docs, exec)?;
    let backend = build_backend(&loaded.model, &bc, encoded)?;
    let build_ms = started.elapsed().as_secs_f64() * 1e3;
    persist_backend(&loaded, &backend, &output)?;
    let profile = serde_json::json!({
        "model": loaded.model.name,
        "backend": kind.name(),
        "docs": loaded.docs.len(),
        "index_bytes": std::fs::metadata(&output).map(|m| m.len()).unwrap_or(0),
        "build_ms": build_ms,
    });
    println!("{profile}");
    Ok(())
}

pub fn search(cfg: &Config) -> CliResult<()> {
    let exec = execution(cfg)?;
    let kind = backend_kind(cfg)?;
    let index_path = cfg.input_path("index")?;
    let loaded = load_model(cfg, exec)?;
    let queries = loaded.require_queries()?;
    let budget = budget(cfg)?;
    let output = cfg.output_path()?;
    let tag = cfg.str_or("tag", &loaded.model.name);
    let backend = load_backend(&loaded, kind, &index_path)?;
    let reprs = loaded.model.encode_queries(queries, exec)?;
    let pairs: Vec<_> = queries.iter().zip(&reprs).collect();
    let lists = exec.try_map(&pairs, |(q, r)| backend.search(&q.id, r, &budget).map(|(l, _)| l))?;
    let run = Run::from_lists(lists)?;
    write_run(&output, &run, &tag, &[cfg.header("search")])?;
    Ok(())
}

pub fn train_cmd(cfg: &Config) -> CliResult<()> {
    let exec = execution(cfg)?;
    let an = analyzer(cfg)?;
    let data = load_train_data(&cfg.input_path("train_data")?, &an)?;
    if data.is_empty() {
        return Err(data_error("training data is empty"));
    }
    let defaults = TrainConfig::default();
    let tc = TrainConfig {
        learning_rate: cfg.parse_or("learning_rate", defaults.learning_rate)?,
        epochs: cfg.parse_or("epochs", defaults.epochs)?,
        batch_size: cfg.parse_or("batch_size", defaults.batch_size)?,
        seed: cfg.parse_or("seed", defaults.seed)?,
        shared_encoder: parse_bool("shared_encoder", &cfg.str_or("shared_encoder", &defaults.shared_encoder.to_string()))?,
        dim: cfg.parse_or("dim", defaults.dim)?,
    };
    tc.validate()?;
    let output = cfg.output_path()?;
    let (model, report) = train(&tc, &data, build_dictionary(&data), exec)?;
    model.save(&output)?;
    for (i, l) in report.epoch_losses.iter().enumerate() {
        println!("epoch {} loss {l:.6}", i + 1);
    }
    Ok(())
}

pub fn fuse(cfg: &Config) -> CliResult<()> {
    let a = read_run(&cfg.input_path("run_a")?)?;
    let b = read_run(&cfg.input_path("run_b")?)?;
    let fc = FusionConfig::new(cfg.parse_or("alpha", 0.5)?, cfg.str_or("normalization", "min_max").parse()?)?;
    let k: Option<usize> = cfg.opt_parse("k")?;
    let output = cfg.output_path()?;
    let tag = cfg.str_or("tag", "fused");
    let mut fused = fuse_runs(&a, &b, &fc)?;
    if let Some(k) = k {
        fused = Run::from_lists(fused.lists().map(|l| {
            let mut l = l.clone();
            l.truncate(k);
            l
        }))?;
    }
    write_run(&output, &fused, &tag, &[cfg.header("fuse")])?;
    Ok(())
}

pub fn rerank(cfg: &Config) -> CliResult<()> {
    let exec = execution(cfg)?;
    let first = read_run(&cfg.input_path("first_stage")?)?;
    let loaded = load_model(cfg, exec)?;
    let queries = loaded.require_queries()?;
    let rc = RerankConfig {
        carry_first_stage_score: parse_bool("carry_first_stage_score", &cfg.str_or("carry_first_stage_score", "false"))?,
        ..RerankConfig::new(cfg.parse_or("depth", 100usize)?)?
    };
    let output = cfg.output_path()?;
    let tag = cfg.str_or("tag", &format!("rerank_{}", loaded.model.name));
    let corpus = CorpusLookup::new(&loaded.docs);
    let (run, failed) = rerank_run(&first, &rc, &loaded.model, queries, &corpus, exec)?;
    let mut comments = vec![cfg.header("rerank")];
    for (q, docs) in &failed {
        comments.push(format!("unencodable {q}: {}", docs.join(" ")));
    }
    write_run(&output, &run, &tag, &comments)?;
    Ok(())
}

enum Metric {
    Mrr(usize),
    Ndcg(usize),
    Recall(usize),
    Ap,
}

impl Metric {
    fn parse(s: &str) -> CliResult<Self> {
        let bad = || CliError::Config(format!("unknown metric '{s}'"));
        if s == "ap" || s == "map" {
            return Ok(Metric::Ap);
        }
        let (name, k) = s.split_once('@').ok_or_else(bad)?;
        let k: usize = k.parse().ok().filter(|&k| k > 0).ok_or_else(bad)?;
        match name {
            "mrr" => Ok(Metric::Mrr(k)),
            "ndcg" => Ok(Metric::Ndcg(k)),
            "recall" => Ok(Metric::Recall(k)),
            _ => Err(bad()),
        }
    }

    fn eval(&self, run: &Run, qrels: &Qrels) -> reprir::Result<MetricValue> {
        match *self {
            Metric::Mrr(k) => mrr_at_k(run, qrels, k),
            Metric::Ndcg(k) => ndcg_at_k(run, qrels, k),
            Metric::Recall(k) => recall_at_k(run, qrels, k),
            Metric::Ap => average_precision(run, qrels),
        }
    }
}

/// One `name<TAB>value` line per metric plus evaluated/skipped counts.
pub fn eval(cfg: &Config) -> CliResult<()> {
    let run = read_run(&cfg.input_path("run")?)?;
    let qrels = read_qrels(&cfg.input_path("qrels")?)?;
    let names = cfg.str_or("metrics", "mrr@10,ndcg@10,ap,recall@100");
    let metrics: Vec<(&str, Metric)> = names
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| Metric::parse(s).map(|m| (s, m)))
        .collect::<CliResult<_>>()?;
    let mut out = format!("# {}\n", cfg.header("eval"));
    let mut counts = None;
    for (name, m) in &metrics {
        let v = m.eval(&run, &qrels)?;
        out.push_str(&format!("{name}\t{:.6}\n", v.mean));
        counts.get_or_insert((v.evaluated, v.skipped));
    }
    if let Some((evaluated, skipped)) = counts {
        out.push_str(&format!("evaluated\t{evaluated}\nskipped\t{skipped}\n"));
    }
    emit(cfg, &out)
}

/// One JSON profile row per backend. Pairs the model cannot run on are
/// reported on stderr and left out.
pub fn profile(cfg: &Config) -> CliResult<()> {
    let exec = execution(cfg)?;
    let loaded = load_model(cfg, exec)?;
    let queries = loaded.require_queries()?;
    let budget = budget(cfg)?;
    let kinds: Vec<BackendKind> = cfg
        .str_or("backends", "brute,inverted,maxscore,hnsw")
        .split(',')
        .map(|s| s.trim().parse().map_err(CliError::from))
        .collect::<CliResult<_>>()?;
    let default_name = cfg
        .opt_str("corpus")
        .map(|c| std::path::Path::new(&c).file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or(c))
        .unwrap_or_else(|| "corpus".into());
    let corpus_name = cfg.str_or("corpus_name", &default_name);
    let mut bcs = Vec::new();
    for kind in kinds {
        bcs.push(backend_config(cfg, kind)?);
    }
    let mut out = format!("# {}\n", cfg.header("profile"));
    for bc in &bcs {
        match cross_execute(&loaded.model, bc, &corpus_name, &loaded.docs, queries, &budget, exec) {
            Ok(o) => {
                out.push_str(&serde_json::to_string(&o.profile).expect("profile serializes"));
                out.push('\n');
            }
            Err(Error::Unsupported(msg)) => eprintln!("skipping {}: {msg}", bc.kind.name()),
            Err(e) => return Err(e.into()),
        }
    }
    emit(cfg, &out)
}
