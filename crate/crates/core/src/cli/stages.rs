use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::json;

use scikg::corpus::{ingest_corpus, Corpus, CorpusFormat};
use scikg::extract::{build_candidate_graph, ExtractionConfig};
use scikg::fusion::fuse_all;
use scikg::graph::KnowledgeGraph;
use scikg::linkpred::{evaluate_lp, lp_bindings, predict_dataset, LpAttachments, LpDataset, LpVariant, Split, WikiStore};
use scikg::llm::{AuditLog, LlmGateway};
use scikg::metrics::relation_distribution;
use scikg::qa::{parse_items, run_benchmark, QaOptions, QaTask};
use scikg::seeds::{generate_seed_entities, SeedList};

use super::artifacts::{write_json, write_jsonl, StageKey, Workspace};
use super::config::RunConfig;

pub const CORPUS_INDEX: &str = "corpus.json";
pub const SEEDS: &str = "seeds.txt";
pub const CANDIDATE: &str = "candidate.tsv";
pub const FUSED: &str = "fused.tsv";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageOutcome {
    pub stage: String,
    pub reused: bool,
    /// Entities or items that failed without aborting the stage.
    pub failures: usize,
}

pub struct Ctx {
    pub cfg: RunConfig,
    pub ws: Workspace,
}

fn sidecar(rel: &str) -> String {
    scikg::graph::alias_sidecar_path(Path::new(rel)).display().to_string()
}

fn report_name(stage: &str) -> String {
    format!("{}_report.json", stage.replace(':', "_"))
}

impl Ctx {
    fn reuse(&self, key: &StageKey) -> Result<Option<StageOutcome>> {
        if !self.ws.is_fresh(key) {
            return Ok(None);
        }
        let report = self.ws.path(&report_name(&key.stage));
        let text = fs::read_to_string(&report).with_context(|| format!("reading {}", report.display()))?;
        let v: serde_json::Value = serde_json::from_str(&text)?;
        let failures = v.get("failure_count").and_then(|x| x.as_u64()).unwrap_or(0) as usize;
        log::info!("{}: inputs unchanged, reusing outputs (use --force to rerun)", key.stage);
        Ok(Some(StageOutcome { stage: key.stage.clone(), reused: true, failures }))
    }

    fn finish<R: Serialize>(&mut self, key: StageKey, report: &R, failures: usize, outputs: &[&str]) -> Result<StageOutcome> {
        let stage = key.stage.clone();
        let rname = report_name(&stage);
        let mut value = serde_json::to_value(report)?;
        value["failure_count"] = json!(failures);
        write_json(&self.ws.path(&rname), &value)?;
        let mut all: Vec<&str> = outputs.to_vec();
        all.push(&rname);
        self.ws.record(key, &all)?;
        Ok(StageOutcome { stage, reused: false, failures })
    }

    /// Gateway whose audit log goes to `audit/<stage>.jsonl`, replaced per run.
    fn gateway(&self, stage: &str) -> Result<(LlmGateway, String)> {
        let rel = format!("audit/{}.jsonl", stage.replace(':', "_"));
        let path = self.ws.path(&rel);
        fs::create_dir_all(path.parent().expect("audit dir"))?;
        if path.exists() {
            fs::remove_file(&path)?;
        }
        let gw = LlmGateway::from_config(&self.cfg.effective_backend())?.with_audit(AuditLog::with_file(&path)?);
        Ok((gw, rel))
    }

    fn backend_inputs(&self) -> Vec<(&'static str, PathBuf)> {
        self.cfg.backend.fixtures.iter().map(|p| ("fixtures", p.clone())).collect()
    }

    fn load_corpus(&self) -> Result<(PathBuf, Corpus)> {
        let p = self.ws.require(CORPUS_INDEX, "corpus index")?;
        let corpus = Corpus::load(&p)?;
        Ok((p, corpus))
    }

    pub fn ingest(&mut self) -> Result<StageOutcome> {
        let Some(src) = self.cfg.corpus.clone() else {
            bail!("no corpus given: set `corpus` in the config or pass --corpus");
        };
        if !src.is_file() {
            bail!("corpus not found at {}", src.display());
        }
        let format = CorpusFormat::from_path(&src);
        let key = StageKey::new("ingest", &format!("{format:?}"), &[("corpus", &src)])?;
        if let Some(o) = self.reuse(&key)? {
            return Ok(o);
        }
        let (corpus, report) = ingest_corpus(&src, format)?;
        if corpus.is_empty() {
            bail!("corpus {} holds no valid documents", src.display());
        }
        corpus.save(&self.ws.path(CORPUS_INDEX))?;
        log::info!("ingest: {} documents, {} skipped", report.ingested, report.skipped.len());
        self.finish(key, &report, 0, &[CORPUS_INDEX])
    }

    pub fn seeds(&mut self) -> Result<StageOutcome> {
        let (cpath, corpus) = self.load_corpus()?;
        let mut inputs: Vec<(&str, &Path)> = vec![("corpus", &cpath)];
        if let Some(p) = &self.cfg.seeds_file {
            inputs.push(("seeds_file", p));
        }
        let key = StageKey::new("seeds", &self.cfg.seed, &inputs)?;
        if let Some(o) = self.reuse(&key)? {
            return Ok(o);
        }
        let seeds = match &self.cfg.seeds_file {
            Some(p) => SeedList::from_text(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?),
            None => generate_seed_entities(&corpus, &self.cfg.seed)?,
        };
        if seeds.is_empty() {
            bail!("no seed entities: the corpus yielded no candidate terms");
        }
        fs::write(self.ws.path(SEEDS), seeds.to_text())?;
        fs::write(self.ws.path("seeds.tsv"), seeds.to_tsv())?;
        log::info!("seeds: {} entities", seeds.len());
        let report = json!({ "seed_count": seeds.len(), "mined": self.cfg.seeds_file.is_none() });
        self.finish(key, &report, 0, &[SEEDS, "seeds.tsv"])
    }

    pub fn extract(&mut self) -> Result<StageOutcome> {
        let (cpath, corpus) = self.load_corpus()?;
        let spath = self.ws.require(SEEDS, "seed list")?;
        let backend_inputs = self.backend_inputs();
        let mut inputs: Vec<(&str, &Path)> = vec![("corpus", &cpath), ("seeds", &spath)];
        inputs.extend(backend_inputs.iter().map(|(l, p)| (*l, p.as_path())));
        let params = json!({ "budgets": self.cfg.budgets, "backend": self.cfg.effective_backend() });
        let key = StageKey::new("extract", &params, &inputs)?;
        if let Some(o) = self.reuse(&key)? {
            return Ok(o);
        }
        let seeds = SeedList::from_text(&fs::read_to_string(&spath)?);
        let (llm, audit) = self.gateway("extract")?;
        let config = ExtractionConfig { budget: self.cfg.budgets.retrieval() };
        let build = build_candidate_graph(&seeds, &corpus, &llm, &config)?;
        build.graph.write(&self.ws.path(CANDIDATE))?;
        for f in &build.failures {
            log::error!("extract: {}: {}", f.entity, f.error);
        }
        log::info!("extract: {} triplets from {} seeds", build.graph.len(), seeds.len());
        let report = json!({
            "seed_count": seeds.len(),
            "triplet_count": build.graph.len(),
            "entities": build.reports,
            "failures": build.failures,
        });
        let side = sidecar(CANDIDATE);
        self.finish(key, &report, build.failures.len(), &[CANDIDATE, &side, &audit])
    }

    pub fn fuse(&mut self) -> Result<StageOutcome> {
        let cand_path = self.ws.require(CANDIDATE, "candidate graph")?;
        let (cpath, corpus) = self.load_corpus()?;
        let spath = self.ws.require(SEEDS, "seed list")?;
        let backend_inputs = self.backend_inputs();
        let expert_path = self.cfg.expert_graph.clone();
        let mut inputs: Vec<(&str, &Path)> = vec![("candidate", &cand_path), ("corpus", &cpath), ("seeds", &spath)];
        if let Some(p) = &expert_path {
            inputs.push(("expert", p));
        }
        inputs.extend(backend_inputs.iter().map(|(l, p)| (*l, p.as_path())));
        let params =
            json!({ "fusion": self.cfg.fusion, "budgets": self.cfg.budgets, "backend": self.cfg.effective_backend() });
        let key = StageKey::new("fuse", &params, &inputs)?;
        if let Some(o) = self.reuse(&key)? {
            return Ok(o);
        }
        let candidate = KnowledgeGraph::read(&cand_path)?;
        let expert = expert_path
            .as_deref()
            .map(|p| KnowledgeGraph::read(p).with_context(|| format!("reading expert graph {}", p.display())))
            .transpose()?;
        let seeds = SeedList::from_text(&fs::read_to_string(&spath)?);
        let (llm, audit) = self.gateway("fuse")?;
        let outcome = fuse_all(
            &candidate,
            expert.as_ref(),
            &seeds.entities,
            &corpus,
            &llm,
            &self.cfg.fusion,
            self.cfg.budgets.background(),
        )?;
        outcome.graph.write(&self.ws.path(FUSED))?;
        for f in &outcome.failures {
            log::error!("fuse: {}: {}", f.entity, f.error);
        }
        log::info!("fuse: {} -> {} triplets", candidate.len(), outcome.graph.len());
        let distribution: BTreeMap<String, f64> = relation_distribution(&outcome.graph)
            .map(|d| d.into_iter().map(|(r, p)| (r.storage_name().to_string(), p)).collect())
            .unwrap_or_default();
        let report = json!({
            "candidate_triplets": candidate.len(),
            "fused_triplets": outcome.graph.len(),
            "relation_distribution": distribution,
            "alias_classes": outcome.graph.aliases().classes(),
            "conflict_resolutions": outcome.resolutions,
            "entities": outcome.results,
            "failures": outcome.failures,
        });
        let side = sidecar(FUSED);
        self.finish(key, &report, outcome.failures.len(), &[FUSED, &side, &audit])
    }

    pub fn pipeline(&mut self) -> Result<Vec<StageOutcome>> {
        Ok(vec![self.ingest()?, self.seeds()?, self.extract()?, self.fuse()?])
    }

    pub fn lp(&mut self, args: &LpArgs) -> Result<StageOutcome> {
        let stage = format!("lp:{}", args.variant);
        let mut inputs: Vec<(&str, &Path)> = vec![("pairs", &args.pairs)];
        if let Some(p) = &args.train {
            inputs.push(("train", p));
        }
        if let Some(p) = &args.wiki {
            inputs.push(("wiki", p));
        }
        let corpus_path = self.ws.path(CORPUS_INDEX);
        let use_corpus = args.variant == LpVariant::Doc;
        if use_corpus {
            inputs.push(("corpus", &corpus_path));
        }
        let backend_inputs = self.backend_inputs();
        inputs.extend(backend_inputs.iter().map(|(l, p)| (*l, p.as_path())));
        let params = json!({
            "domain": args.domain, "split": args.split, "strict": args.strict,
            "budgets": self.cfg.budgets, "backend": self.cfg.effective_backend(),
        });
        if use_corpus && !corpus_path.is_file() {
            bail!("corpus index not found at {} (the doc variant needs `ingest` first)", corpus_path.display());
        }
        let key = StageKey::new(&stage, &params, &inputs)?;
        if let Some(o) = self.reuse(&key)? {
            return Ok(o);
        }
        let dataset = LpDataset::load(&args.pairs, &args.domain, args.split)?;
        if dataset.pairs.is_empty() {
            bail!("no pairs in {}", args.pairs.display());
        }
        let train = args.train.as_deref().map(|p| LpDataset::load(p, &args.domain, Split::Train)).transpose()?;
        let wiki = args.wiki.as_deref().map(WikiStore::load).transpose()?;
        let corpus = if use_corpus { Some(Corpus::load(&corpus_path)?) } else { None };
        let att = LpAttachments {
            corpus: corpus.as_ref(),
            train: train.as_ref(),
            wiki: wiki.as_ref(),
            budget: self.cfg.budgets.retrieval(),
        };
        let first = &dataset.pairs[0];
        lp_bindings(args.variant, &dataset.domain, &first.entity_a, &first.entity_b, &att)?;
        let (llm, audit) = self.gateway(&stage)?;
        let preds = predict_dataset(&llm, args.variant, &dataset, &att);
        let decisions: Vec<Option<bool>> = preds.iter().map(|p| p.prediction).collect();
        let metrics = evaluate_lp(&dataset, &decisions, args.strict)?;
        let pred_rel = format!("{}_predictions.jsonl", stage.replace(':', "_"));
        write_jsonl(&self.ws.path(&pred_rel), &preds)?;
        let failures = preds.iter().filter(|p| p.exchange_ref.is_empty()).count();
        log::info!("{stage}: accuracy {:.4}, f1 {:.4}", metrics.accuracy, metrics.f1);
        let report = json!({ "variant": args.variant.as_str(), "pairs": dataset.pairs.len(), "metrics": metrics });
        self.finish(key, &report, failures, &[&pred_rel, &audit])
    }

    pub fn qa(&mut self, args: &QaArgs) -> Result<StageOutcome> {
        let kg_path = match &args.kg {
            Some(p) => p.clone(),
            None => self.ws.require(FUSED, "fused graph")?,
        };
        if !kg_path.is_file() {
            bail!("knowledge graph not found at {}", kg_path.display());
        }
        let backend_inputs = self.backend_inputs();
        let mut inputs: Vec<(&str, &Path)> = vec![("items", &args.items), ("kg", &kg_path)];
        inputs.extend(backend_inputs.iter().map(|(l, p)| (*l, p.as_path())));
        let params = json!({ "task": args.task, "directed": args.directed, "backend": self.cfg.effective_backend() });
        let key = StageKey::new("qa", &params, &inputs)?;
        if let Some(o) = self.reuse(&key)? {
            return Ok(o);
        }
        let text = fs::read_to_string(&args.items).with_context(|| format!("reading {}", args.items.display()))?;
        let all = parse_items(&text).with_context(|| format!("in {}", args.items.display()))?;
        let (positions, items): (Vec<usize>, Vec<_>) =
            all.into_iter().enumerate().filter(|(_, it)| args.task.is_none_or(|t| it.task == t)).unzip();
        let kg = KnowledgeGraph::read(&kg_path)?;
        let (llm, audit) = self.gateway("qa")?;
        let mut preds = run_benchmark(&items, &kg, &llm, QaOptions { directed: args.directed });
        for p in &mut preds {
            p.index = positions[p.index];
        }
        write_jsonl(&self.ws.path("qa_predictions.jsonl"), &preds)?;
        let mut per_task: BTreeMap<String, serde_json::Value> = BTreeMap::new();
        for t in QaTask::ALL {
            let of: Vec<_> = preds.iter().filter(|p| p.task == t).collect();
            if !of.is_empty() {
                per_task.insert(
                    t.to_string(),
                    json!({
                        "items": of.len(),
                        "degraded": of.iter().filter(|p| p.degraded).count(),
                        "errors": of.iter().filter(|p| p.error.is_some()).count(),
                    }),
                );
            }
        }
        let failures = preds.iter().filter(|p| p.error.is_some()).count();
        log::info!("qa: {} items answered, {failures} failed", preds.len());
        let report = json!({ "items": preds.len(), "directed": args.directed, "tasks": per_task });
        self.finish(key, &report, failures, &["qa_predictions.jsonl", &audit])
    }
}

pub struct LpArgs {
    pub pairs: PathBuf,
    pub domain: String,
    pub variant: LpVariant,
    pub split: Split,
    pub train: Option<PathBuf>,
    pub wiki: Option<PathBuf>,
    pub strict: bool,
}

pub struct QaArgs {
    pub items: PathBuf,
    pub kg: Option<PathBuf>,
    pub task: Option<QaTask>,
    pub directed: bool,
}
