use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use scikg::corpus::{RetrievalBudget, DEFAULT_CONTEXT_CHARS};
use scikg::fusion::FusionPolicy;
use scikg::llm::{BackendConfig, BackendKind};
use scikg::seeds::SeedConfig;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budgets {
    pub context_chars: usize,
    pub max_docs: usize,
    /// Fusion background retrieval; each falls back to the extraction value when unset.
    pub background_chars: Option<usize>,
    pub background_docs: Option<usize>,
    /// Overrides `backend.parallelism_cap` when set.
    pub parallelism: Option<usize>,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets { context_chars: DEFAULT_CONTEXT_CHARS, max_docs: 5, background_chars: None, background_docs: None, parallelism: None }
    }
}

impl Budgets {
    pub fn retrieval(&self) -> RetrievalBudget {
        RetrievalBudget { max_docs: self.max_docs, max_chars: self.context_chars }
    }

    pub fn background(&self) -> RetrievalBudget {
        RetrievalBudget {
            max_docs: self.background_docs.unwrap_or(self.max_docs),
            max_chars: self.background_chars.unwrap_or(self.context_chars),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub corpus: Option<PathBuf>,
    /// User-supplied seed entities (one per line) instead of mining.
    pub seeds_file: Option<PathBuf>,
    pub expert_graph: Option<PathBuf>,
    pub out: PathBuf,
    pub deterministic: bool,
    pub backend: BackendConfig,
    pub seed: SeedConfig,
    pub fusion: FusionPolicy,
    pub budgets: Budgets,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            version: CONFIG_VERSION,
            corpus: None,
            seeds_file: None,
            expert_graph: None,
            out: PathBuf::from("out"),
            deterministic: false,
            backend: BackendConfig::default(),
            seed: SeedConfig::default(),
            fusion: FusionPolicy::default(),
            budgets: Budgets::default(),
        }
    }
}

const SECRET_KEYS: [&str; 5] = ["api_key", "apikey", "token", "secret", "password"];

fn is_secret_key(key: &str) -> bool {
    let k = key.to_ascii_lowercase();
    SECRET_KEYS.iter().any(|s| k == *s || k.ends_with(&format!("_{s}")))
}

fn find_secret_key(value: &serde_json::Value, prefix: &str, found: &mut Vec<String>) {
    if let serde_json::Value::Object(t) = value {
        for (k, v) in t {
            let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
            if is_secret_key(k) {
                found.push(path.clone());
            }
            find_secret_key(v, &path, found);
        }
    }
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p.as_mut() {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl RunConfig {
    /// Reads a TOML or JSON config; relative paths are taken from the config's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let raw: serde_json::Value = if is_json {
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        } else {
            let t: toml::Table = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            serde_json::to_value(t)?
        };
        check_secrets(&raw)?;
        let mut cfg: RunConfig = serde_json::from_value(raw).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        resolve(base, &mut cfg.corpus);
        resolve(base, &mut cfg.seeds_file);
        resolve(base, &mut cfg.expert_graph);
        resolve(base, &mut cfg.backend.fixtures);
        if cfg.out.is_relative() {
            cfg.out = base.join(&cfg.out);
        }
        Ok(cfg)
    }

    /// Every problem found, not just the first.
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.version != CONFIG_VERSION {
            errs.push(format!("version must be {CONFIG_VERSION}, found {}", self.version));
        }
        errs.extend(self.backend.validate());
        if self.deterministic && self.backend.kind == BackendKind::HttpChat {
            errs.push("deterministic mode requires the mock or replay backend".into());
        }
        for (name, p) in [
            ("corpus", &self.corpus),
            ("seeds_file", &self.seeds_file),
            ("expert_graph", &self.expert_graph),
            ("backend.fixtures", &self.backend.fixtures),
        ] {
            if let Some(p) = p {
                if !p.exists() {
                    errs.push(format!("{name}: {} does not exist", p.display()));
                }
            }
        }
        if let Err(e) = self.seed.validate() {
            errs.push(format!("seed: {e}"));
        }
        if let Err(e) = self.fusion.validate() {
            errs.push(format!("fusion: {e}"));
        }
        if self.budgets.context_chars == 0 || self.budgets.max_docs == 0 {
            errs.push("budgets.context_chars and budgets.max_docs must be at least 1".into());
        }
        if self.budgets.background_chars == Some(0) || self.budgets.background_docs == Some(0) {
            errs.push("budgets.background_chars and budgets.background_docs must be at least 1".into());
        }
        if self.budgets.parallelism == Some(0) {
            errs.push("budgets.parallelism must be at least 1".into());
        }
        errs
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let errs = self.validate();
        if !errs.is_empty() {
            bail!("invalid configuration:\n  - {}", errs.join("\n  - "));
        }
        Ok(())
    }

    /// Backend settings after applying the top-level overrides.
    pub fn effective_backend(&self) -> BackendConfig {
        let mut b = self.backend.clone();
        b.deterministic_mode |= self.deterministic;
        if let Some(p) = self.budgets.parallelism {
            b.parallelism_cap = p;
        }
        b
    }
}

fn check_secrets(raw: &serde_json::Value) -> Result<()> {
    let mut found = Vec::new();
    find_secret_key(raw, "", &mut found);
    if !found.is_empty() {
        bail!(
            "config must not hold secrets ({}); put the token in the environment variable named by backend.auth_env",
            found.join(", ")
        );
    }
    Ok(())
}
