//! Command-line surface. Settings come from `--config` (TOML or JSON) and are
//! overridden by flags; anything unset falls back to built-in defaults.

mod artifacts;
mod config;
mod eval;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};

use scikg::linkpred::{LpVariant, Split};
use scikg::llm::BackendKind;
use scikg::metrics::ScoreScale;
use scikg::qa::QaTask;

use artifacts::{write_json, Workspace};
pub use config::RunConfig;
use stages::{Ctx, LpArgs, QaArgs, StageOutcome};

#[derive(Debug, Parser)]
#[command(name = "scikg", version, about = "Build, fuse and query scientific knowledge graphs")]
pub struct Cli {
    /// Run configuration (TOML or JSON).
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Output directory for artifacts and manifest.json.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Rerun stages even when their inputs are unchanged.
    #[arg(long, global = true)]
    force: bool,
    /// Sequential, reproducible execution (mock or replay backend only).
    #[arg(long, global = true)]
    deterministic: bool,
    /// Model backend kind.
    #[arg(long, global = true, value_parser = parse_backend)]
    backend: Option<BackendKind>,
    /// Fixture JSONL for the mock/replay backend.
    #[arg(long, global = true)]
    fixtures: Option<PathBuf>,
    /// Bound on concurrent model calls.
    #[arg(long, global = true)]
    parallelism: Option<usize>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

fn parse_backend(s: &str) -> Result<BackendKind, String> {
    match s {
        "http_chat" | "http" => Ok(BackendKind::HttpChat),
        "mock" => Ok(BackendKind::Mock),
        "replay" => Ok(BackendKind::Replay),
        _ => Err(format!("unknown backend {s:?} (http_chat, mock, replay)")),
    }
}

#[derive(Debug, Args)]
struct CorpusArg {
    /// Corpus file (JSONL or TSV).
    #[arg(long)]
    corpus: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse and index the corpus.
    Ingest(CorpusArg),
    /// Mine seed entities from the indexed corpus.
    Seeds,
    /// Extract the candidate graph around every seed.
    Extract,
    /// Fuse the candidate graph (and optional expert graph) into the final graph.
    Fuse {
        /// Expert graph TSV.
        #[arg(long)]
        expert: Option<PathBuf>,
    },
    /// Ingest, seeds, extract and fuse in sequence.
    Pipeline(CorpusArg),
    /// Prerequisite link prediction over labelled entity pairs.
    Lp {
        /// Pair TSV: entity_a, entity_b, label.
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long, default_value = "NLP")]
        domain: String,
        #[arg(long, default_value = "plain")]
        variant: LpVariant,
        #[arg(long, default_value = "test", value_parser = parse_split)]
        split: Split,
        /// Training pairs, needed by the con variant.
        #[arg(long)]
        train: Option<PathBuf>,
        /// Entity descriptions JSON, needed by the wiki variant.
        #[arg(long)]
        wiki: Option<PathBuf>,
        /// Count unparseable responses as wrong instead of excluding them.
        #[arg(long)]
        strict: bool,
    },
    /// Answer QA items against a graph.
    Qa {
        /// QA items JSONL: {task, question, gold}.
        #[arg(long)]
        items: PathBuf,
        /// Graph TSV (defaults to the fused graph in --out).
        #[arg(long)]
        kg: Option<PathBuf>,
        #[arg(long)]
        task: Option<QaTask>,
        /// PATH follows prerequisite edges head to tail only.
        #[arg(long)]
        directed: bool,
    },
    /// Score predictions, rating sheets or a graph.
    Eval {
        #[arg(long)]
        task: Option<QaTask>,
        /// QA predictions JSONL from `qa`.
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// QA items JSONL holding gold answers.
        #[arg(long)]
        gold: Option<PathBuf>,
        /// Report scores multiplied by 100.
        #[arg(long)]
        percent: bool,
        /// Embedding service for similarity (hashed bag-of-words when absent).
        #[arg(long)]
        embedding_endpoint: Option<String>,
        #[arg(long, default_value = "text-embedding-3-small")]
        embedding_model: String,
        #[arg(long, default_value = "SCIKG_EMBEDDING_KEY")]
        embedding_auth_env: String,
        #[arg(long, default_value_t = 1536)]
        embedding_dim: usize,
        /// Rating sheet CSV: item_id, rater_id, score[, group].
        #[arg(long, conflicts_with_all = ["predictions", "kg"])]
        ratings: Option<PathBuf>,
        /// Rating scale as min,max.
        #[arg(long, default_value = "1,3", value_parser = parse_scale)]
        scale: (i64, i64),
        /// Graph TSV for relation statistics.
        #[arg(long, conflicts_with = "predictions")]
        kg: Option<PathBuf>,
    },
}

fn parse_split(s: &str) -> Result<Split, String> {
    match s {
        "train" => Ok(Split::Train),
        "test" => Ok(Split::Test),
        _ => Err(format!("unknown split {s:?} (train, test)")),
    }
}

fn parse_scale(s: &str) -> Result<(i64, i64), String> {
    let (a, b) = s.split_once(',').ok_or("expected min,max")?;
    let lo = a.trim().parse::<i64>().map_err(|e| e.to_string())?;
    let hi = b.trim().parse::<i64>().map_err(|e| e.to_string())?;
    if lo > hi {
        return Err("min exceeds max".into());
    }
    Ok((lo, hi))
}

impl Cli {
    pub fn verbosity(&self) -> u8 {
        self.verbose
    }

    fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        if self.deterministic {
            cfg.deterministic = true;
        }
        if let Some(k) = self.backend {
            cfg.backend.kind = k;
        }
        if let Some(f) = &self.fixtures {
            cfg.backend.fixtures = Some(f.clone());
        }
        if let Some(n) = self.parallelism {
            cfg.budgets.parallelism = Some(n);
        }
        match &self.command {
            Command::Ingest(c) | Command::Pipeline(c) if c.corpus.is_some() => cfg.corpus = c.corpus.clone(),
            Command::Fuse { expert: Some(e) } => cfg.expert_graph = Some(e.clone()),
            _ => {}
        }
        Ok(cfg)
    }
}

fn exit_for(outcomes: &[StageOutcome]) -> ExitCode {
    for o in outcomes {
        let state = if o.reused { "reused" } else { "done" };
        if o.failures > 0 {
            eprintln!("{}: {state}, {} failure(s)", o.stage, o.failures);
        } else {
            eprintln!("{}: {state}", o.stage);
        }
    }
    if outcomes.iter().any(|o| o.failures > 0) {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    }
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    let cfg = cli.run_config()?;
    cfg.ensure_valid()?;
    let ws = Workspace::open(&cfg.out, cli.force)?;
    let mut ctx = Ctx { cfg, ws };
    let outcomes = match cli.command {
        Command::Ingest(_) => vec![ctx.ingest()?],
        Command::Seeds => vec![ctx.seeds()?],
        Command::Extract => vec![ctx.extract()?],
        Command::Fuse { .. } => vec![ctx.fuse()?],
        Command::Pipeline(_) => ctx.pipeline()?,
        Command::Lp { pairs, domain, variant, split, train, wiki, strict } => {
            vec![ctx.lp(&LpArgs { pairs, domain, variant, split, train, wiki, strict })?]
        }
        Command::Qa { items, kg, task, directed } => vec![ctx.qa(&QaArgs { items, kg, task, directed })?],
        Command::Eval {
            task,
            predictions,
            gold,
            percent,
            embedding_endpoint,
            embedding_model,
            embedding_auth_env,
            embedding_dim,
            ratings,
            scale,
            kg,
        } => {
            if predictions.is_none() && ratings.is_none() && kg.is_none() {
                bail!("eval needs --predictions with --gold, --ratings, or --kg");
            }
            let args = eval::EvalArgs {
                task,
                predictions,
                gold,
                scale: if percent { ScoreScale::Percent } else { ScoreScale::Raw },
                embedding_endpoint,
                embedding_model,
                embedding_auth_env,
                embedding_dim,
                ratings,
                rating_scale: scale,
                kg,
            };
            let report = eval::run(&args)?;
            let name = match task {
                Some(t) => format!("eval_{t}.json"),
                None => "eval.json".into(),
            };
            write_json(&ctx.ws.path(&name), &report)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            return Ok(ExitCode::SUCCESS);
        }
    };
    Ok(exit_for(&outcomes))
}
