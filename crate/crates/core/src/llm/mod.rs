//! Chat-completion gateway: prompt rendering, pluggable backends (HTTP or
//! fixture-driven mock), retries with backoff, bounded parallelism and an
//! append-only audit log of every exchange.

mod backend;
pub mod prompts;

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use backend::{ChatBackend, FixtureRecord, HttpBackend, MockBackend};
pub use prompts::{bindings, render, Bindings, TemplateId};

pub const DEFAULT_AUTH_ENV: &str = "SCIKG_API_KEY";

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("unknown template id {0:?}")]
    UnknownTemplate(String),
    #[error("template {template}: placeholder {{{name}}} is unbound")]
    UnboundPlaceholder { template: TemplateId, name: String },
    #[error("template {template}: binding {name:?} has no placeholder")]
    UnexpectedBinding { template: TemplateId, name: String },
    #[error("transport failed after {attempts} attempt(s): {last}")]
    Transport { attempts: u32, last: TransportError },
    #[error(transparent)]
    Backend(TransportError),
    #[error("fixture file {path}: {message}")]
    Fixture { path: String, message: String },
    #[error("invalid backend config: {0}")]
    Config(String),
    #[error("audit log: {0}")]
    Audit(#[from] std::io::Error),
}

/// Failure of a single attempt.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    #[error("HTTP status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("network error: {0}")]
    Network(String),
    #[error("malformed response: {0}")]
    Decode(String),
    #[error("no fixture for template {template_id} with bindings digest {digest}")]
    FixtureMiss { template_id: TemplateId, digest: String },
}

impl TransportError {
    /// Rate limits, server errors and network failures are retried.
    pub fn is_transient(&self) -> bool {
        match self {
            TransportError::Status { status, .. } => *status == 429 || *status >= 500,
            TransportError::Network(_) => true,
            _ => false,
        }
    }

    pub fn status(&self) -> Option<u16> {
        match self {
            TransportError::Status { status, .. } => Some(*status),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatParams {
    pub model_name: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for ChatParams {
    fn default() -> Self {
        ChatParams { model_name: "gpt-4o".into(), temperature: 0.0, max_tokens: 1024 }
    }
}

/// A rendered request handed to a backend.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatRequest {
    pub template_id: TemplateId,
    pub bindings: Bindings,
    pub bindings_digest: String,
    pub prompt: String,
}

impl ChatRequest {
    pub fn new(template_id: TemplateId, bindings: Bindings) -> Result<Self, LlmError> {
        let prompt = render(template_id, &bindings)?;
        let bindings_digest = bindings_digest(&bindings);
        Ok(ChatRequest { template_id, bindings, bindings_digest, prompt })
    }
}

/// SHA-256 over the canonical JSON of the (sorted) bindings.
pub fn bindings_digest(bindings: &Bindings) -> String {
    let canonical = serde_json::to_string(bindings).expect("string map serializes");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub id: String,
    pub template_id: TemplateId,
    pub bindings_digest: String,
    pub rendered_prompt: String,
    pub params: ChatParams,
    pub raw_response: String,
    pub latency_ms: u64,
    pub attempt_count: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    /// Delay before retry `i` is `backoff_ms[min(i, len - 1)]`.
    pub backoff_ms: Vec<u64>,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 3, backoff_ms: vec![1000, 4000, 16000] }
    }
}

impl RetryPolicy {
    pub fn delay(&self, retry_index: usize) -> Duration {
        match self.backoff_ms.len() {
            0 => Duration::ZERO,
            n => Duration::from_millis(self.backoff_ms[retry_index.min(n - 1)]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    HttpChat,
    Mock,
    /// Strict mock over fixtures, typically a previous run's audit log.
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint: Option<String>,
    /// Name of the environment variable holding the bearer token.
    pub auth_env: String,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout_secs: u64,
    pub retry: RetryPolicy,
    pub parallelism_cap: usize,
    pub deterministic_mode: bool,
    pub fixtures: Option<PathBuf>,
    /// Mock only: a fixture miss is an error instead of a generated response.
    pub strict: bool,
    pub system_prompt: Option<String>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        let params = ChatParams::default();
        BackendConfig {
            kind: BackendKind::Mock,
            endpoint: None,
            auth_env: DEFAULT_AUTH_ENV.into(),
            model: params.model_name,
            temperature: params.temperature,
            max_tokens: params.max_tokens,
            timeout_secs: 120,
            retry: RetryPolicy::default(),
            parallelism_cap: 4,
            deterministic_mode: false,
            fixtures: None,
            strict: false,
            system_prompt: None,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        match self.kind {
            BackendKind::HttpChat if self.endpoint.as_deref().unwrap_or("").is_empty() => {
                errs.push("backend.endpoint is required for http_chat".to_string())
            }
            BackendKind::Replay if self.fixtures.is_none() => {
                errs.push("backend.fixtures is required for the replay backend".to_string())
            }
            _ => {}
        }
        if self.retry.max_attempts == 0 {
            errs.push("backend.retry.max_attempts must be at least 1".into());
        }
        if self.parallelism_cap == 0 {
            errs.push("backend.parallelism_cap must be at least 1".into());
        }
        errs
    }

    pub fn params(&self) -> ChatParams {
        ChatParams { model_name: self.model.clone(), temperature: self.temperature, max_tokens: self.max_tokens }
    }
}

/// Append-only record of exchanges, optionally mirrored to a JSONL file.
#[derive(Debug, Default)]
pub struct AuditLog {
    entries: Mutex<Vec<ChatExchange>>,
    sink: Mutex<Option<BufWriter<File>>>,
}

impl AuditLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends to (creating if needed) `path`.
    pub fn with_file(path: &Path) -> Result<Self, LlmError> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(AuditLog { entries: Mutex::new(Vec::new()), sink: Mutex::new(Some(BufWriter::new(file))) })
    }

    pub fn append(&self, exchange: ChatExchange) -> Result<(), LlmError> {
        if let Some(w) = self.sink.lock().expect("audit sink poisoned").as_mut() {
            serde_json::to_writer(&mut *w, &exchange).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
        self.entries.lock().expect("audit log poisoned").push(exchange);
        Ok(())
    }

    pub fn entries(&self) -> Vec<ChatExchange> {
        self.entries.lock().expect("audit log poisoned").clone()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("audit log poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub struct LlmGateway {
    backend: Box<dyn ChatBackend>,
    params: ChatParams,
    retry: RetryPolicy,
    parallelism_cap: usize,
    deterministic: bool,
    system_prompt: Option<String>,
    audit: AuditLog,
}

impl LlmGateway {
    pub fn new(backend: Box<dyn ChatBackend>) -> Self {
        LlmGateway {
            backend,
            params: ChatParams::default(),
            retry: RetryPolicy::default(),
            parallelism_cap: 4,
            deterministic: false,
            system_prompt: None,
            audit: AuditLog::new(),
        }
    }

    pub fn with_params(mut self, params: ChatParams) -> Self {
        self.params = params;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_parallelism(mut self, cap: usize) -> Self {
        self.parallelism_cap = cap.max(1);
        self
    }

    pub fn deterministic(mut self, on: bool) -> Self {
        self.deterministic = on;
        self
    }

    pub fn with_audit(mut self, audit: AuditLog) -> Self {
        self.audit = audit;
        self
    }

    /// Builds the backend described by `config`; the auth secret is read from the
    /// environment at construction time and never stored in the config.
    pub fn from_config(config: &BackendConfig) -> Result<Self, LlmError> {
        let errs = config.validate();
        if !errs.is_empty() {
            return Err(LlmError::Config(errs.join("; ")));
        }
        let backend: Box<dyn ChatBackend> = match config.kind {
            BackendKind::HttpChat => {
                let token = std::env::var(&config.auth_env).ok();
                Box::new(HttpBackend::new(
                    config.endpoint.clone().unwrap_or_default(),
                    token,
                    Duration::from_secs(config.timeout_secs),
                ))
            }
            BackendKind::Mock | BackendKind::Replay => {
                let mock = match &config.fixtures {
                    Some(path) => MockBackend::from_file(path)?,
                    None => MockBackend::new(),
                };
                Box::new(mock.strict(config.strict || config.kind == BackendKind::Replay))
            }
        };
        let mut gw = LlmGateway::new(backend)
            .with_params(config.params())
            .with_retry(config.retry.clone())
            .with_parallelism(config.parallelism_cap)
            .deterministic(config.deterministic_mode);
        gw.system_prompt = config.system_prompt.clone();
        Ok(gw)
    }

    pub fn params(&self) -> &ChatParams {
        &self.params
    }

    pub fn audit(&self) -> &AuditLog {
        &self.audit
    }

    pub fn is_deterministic(&self) -> bool {
        self.deterministic
    }

    pub fn system_prompt(&self) -> Option<&str> {
        self.system_prompt.as_deref()
    }

    fn execute(&self, request: &ChatRequest) -> (ChatExchange, Result<(), TransportError>) {
        let start = Instant::now();
        let mut attempts = 0u32;
        let outcome = loop {
            attempts += 1;
            match self.backend.send(request, &self.params, self.system_prompt.as_deref()) {
                Ok(text) => break Ok(text),
                Err(e) if e.is_transient() && attempts < self.retry.max_attempts.max(1) => {
                    log::warn!("{} attempt {attempts} failed: {e}; retrying", request.template_id);
                    std::thread::sleep(self.retry.delay(attempts as usize - 1));
                }
                Err(e) => break Err(e),
            }
        };
        let digest = &request.bindings_digest;
        let mut exchange = ChatExchange {
            id: format!("{}-{}", request.template_id, &digest[..16]),
            template_id: request.template_id,
            bindings_digest: digest.clone(),
            rendered_prompt: request.prompt.clone(),
            params: self.params.clone(),
            raw_response: String::new(),
            latency_ms: if self.deterministic { 0 } else { start.elapsed().as_millis() as u64 },
            attempt_count: attempts,
            error: None,
        };
        match outcome {
            Ok(text) => {
                exchange.raw_response = text;
                (exchange, Ok(()))
            }
            Err(e) => {
                exchange.error = Some(e.to_string());
                (exchange, Err(e))
            }
        }
    }

    fn finish(&self, exchange: ChatExchange, outcome: Result<(), TransportError>) -> Result<ChatExchange, LlmError> {
        let attempts = exchange.attempt_count;
        self.audit.append(exchange.clone())?;
        match outcome {
            Ok(()) => Ok(exchange),
            Err(e @ TransportError::FixtureMiss { .. }) => Err(LlmError::Backend(e)),
            Err(e) => Err(LlmError::Transport { attempts, last: e }),
        }
    }

    /// Render, send (with retries) and audit one request.
    pub fn complete(&self, template: TemplateId, bindings: Bindings) -> Result<ChatExchange, LlmError> {
        let request = ChatRequest::new(template, bindings)?;
        let (exchange, outcome) = self.execute(&request);
        self.finish(exchange, outcome)
    }

    /// Issues requests concurrently up to the parallelism cap (sequentially in
    /// deterministic mode). Results and audit entries follow input order.
    pub fn complete_many(&self, requests: Vec<(TemplateId, Bindings)>) -> Vec<Result<ChatExchange, LlmError>> {
        let prepared: Vec<Result<ChatRequest, LlmError>> =
            requests.into_iter().map(|(t, b)| ChatRequest::new(t, b)).collect();
        let executed = self.map_bounded(&prepared, |r| r.as_ref().ok().map(|r| self.execute(r)));
        prepared
            .into_iter()
            .zip(executed)
            .map(|(req, run)| {
                req?;
                let (exchange, outcome) = run.expect("prepared request was executed");
                self.finish(exchange, outcome)
            })
            .collect()
    }

    /// Order-preserving map bounded by the parallelism cap; sequential in deterministic mode.
    pub fn map_bounded<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        if self.deterministic || self.parallelism_cap <= 1 || items.len() <= 1 {
            return items.iter().map(f).collect();
        }
        use rayon::prelude::*;
        match rayon::ThreadPoolBuilder::new().num_threads(self.parallelism_cap).build() {
            Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
            Err(_) => items.iter().map(f).collect(),
        }
    }
}
