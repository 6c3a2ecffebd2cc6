//! `reprir`: batch driver chaining indexing, search, training, fusion,
//! reranking, evaluation and profiling through files.
//!
//! Every subcommand reads a `key = value` job file given by `--config`.
//! Exit status is 0 on success, 2 for configuration errors and 3 for data
//! errors.

mod commands;
mod config;
mod error;
mod models;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::Config;
use crate::error::CliResult;

#[derive(Parser)]
#[command(name = "reprir", version, about = "Logical scoring models over interchangeable retrieval backends")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Encode the corpus and persist a backend index.
    Index(Common),
    /// Answer queries from a persisted index and write a TREC run.
    Search(Common),
    /// Train the toy bi-encoder and write its tables.
    Train(Common),
    /// Linearly combine two runs.
    Fuse(Common),
    /// Rescore the head of a first-stage run.
    Rerank(Common),
    /// Score a run against qrels.
    Eval(Common),
    /// Run one model over several backends and report quality, space and time.
    Profile(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> CliResult<Config> {
        let mut cfg = Config::load(&self.config)?;
        if let Some(o) = &self.output {
            // Flag paths are relative to the working directory, not the config.
            let abs = if o.is_absolute() { o.clone() } else { std::env::current_dir().unwrap_or_default().join(o) };
            cfg.set("output", abs.display());
        }
        if let Some(k) = self.k {
            cfg.set("k", k);
        }
        if let Some(s) = self.seed {
            cfg.set("seed", s);
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let (common, f): (&Common, fn(&Config) -> CliResult<()>) = match &cli.command {
        Command::Index(c) => (c, commands::index),
        Command::Search(c) => (c, commands::search),
        Command::Train(c) => (c, commands::train_cmd),
        Command::Fuse(c) => (c, commands::fuse),
        Command::Rerank(c) => (c, commands::rerank),
        Command::Eval(c) => (c, commands::eval),
        Command::Profile(c) => (c, commands::profile),
    };
    f(&common.load()?)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("reprir: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
