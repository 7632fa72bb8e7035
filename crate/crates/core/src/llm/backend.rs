use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::{json, Value};

use super::{bindings_digest, Bindings, ChatParams, ChatRequest, LlmError, TemplateId, TransportError};
use crate::corpus::phrase_segments;
use crate::graph::RelationType;
use crate::stopwords::default_stopwords;

/// One attempt at a chat completion. Retries are the gateway's job.
pub trait ChatBackend: Send + Sync {
    fn send(&self, request: &ChatRequest, params: &ChatParams, system: Option<&str>) -> Result<String, TransportError>;
}

/// Chat-completions over HTTP(S): `{model, messages, temperature, max_tokens}` in,
/// `choices[0].message.content` out.
pub struct HttpBackend {
    agent: ureq::Agent,
    endpoint: String,
    token: Option<String>,
}

impl HttpBackend {
    pub fn new(endpoint: String, token: Option<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpBackend { agent, endpoint, token }
    }
}

impl ChatBackend for HttpBackend {
    fn send(&self, request: &ChatRequest, params: &ChatParams, system: Option<&str>) -> Result<String, TransportError> {
        let mut messages = Vec::new();
        if let Some(s) = system {
            messages.push(json!({"role": "system", "content": s}));
        }
        messages.push(json!({"role": "user", "content": request.prompt}));
        let body = json!({
            "model": params.model_name,
            "messages": messages,
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        });
        let mut req = self.agent.post(&self.endpoint);
        if let Some(token) = &self.token {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = req.send_json(&body).map_err(|e| TransportError::Network(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError::Network(e.to_string()))?;
        if !(200..300).contains(&status) {
            let mut body = text;
            body.truncate(500);
            return Err(TransportError::Status { status, body });
        }
        let v: Value = serde_json::from_str(&text).map_err(|e| TransportError::Decode(e.to_string()))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| TransportError::Decode("missing choices[0].message.content".into()))
    }
}

/// A fixture line. Either `bindings_digest` or the literal `bindings` must be
/// present; `raw_response` is accepted so audit logs can be replayed directly.
#[derive(Debug, Clone, Deserialize)]
pub struct FixtureRecord {
    pub template_id: TemplateId,
    #[serde(default)]
    pub bindings_digest: Option<String>,
    #[serde(default)]
    pub bindings: Option<Bindings>,
    #[serde(alias = "raw_response")]
    pub response: String,
}

/// Offline backend answering from fixtures keyed by (template, bindings digest).
/// Unless strict, a miss falls back to a generator seeded by the digest.
#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    fixtures: BTreeMap<(TemplateId, String), String>,
    strict: bool,
}

impl MockBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn strict(mut self, strict: bool) -> Self {
        self.strict = strict;
        self
    }

    pub fn len(&self) -> usize {
        self.fixtures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixtures.is_empty()
    }

    pub fn insert(&mut self, template: TemplateId, bindings: &Bindings, response: &str) {
        self.insert_digest(template, &bindings_digest(bindings), response);
    }

    pub fn insert_digest(&mut self, template: TemplateId, digest: &str, response: &str) {
        self.fixtures.insert((template, digest.to_string()), response.to_string());
    }

    /// Later lines override earlier ones with the same key. Audit lines that
    /// recorded an error are skipped.
    pub fn from_jsonl(text: &str, origin: &str) -> Result<Self, LlmError> {
        let mut mock = MockBackend::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let v: Value = serde_json::from_str(line)
                .map_err(|e| LlmError::Fixture { path: origin.into(), message: format!("line {}: {e}", i + 1) })?;
            if v.get("error").is_some_and(|e| !e.is_null()) {
                continue;
            }
            let rec: FixtureRecord = serde_json::from_value(v)
                .map_err(|e| LlmError::Fixture { path: origin.into(), message: format!("line {}: {e}", i + 1) })?;
            let digest = match (&rec.bindings_digest, &rec.bindings) {
                (Some(d), _) => d.clone(),
                (None, Some(b)) => bindings_digest(b),
                (None, None) => {
                    return Err(LlmError::Fixture {
                        path: origin.into(),
                        message: format!("line {}: needs bindings_digest or bindings", i + 1),
                    })
                }
            };
            mock.insert_digest(rec.template_id, &digest, &rec.response);
        }
        Ok(mock)
    }

    pub fn from_file(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Fixture { path: path.display().to_string(), message: e.to_string() })?;
        Self::from_jsonl(&text, &path.display().to_string())
    }
}

impl ChatBackend for MockBackend {
    fn send(&self, request: &ChatRequest, _: &ChatParams, _: Option<&str>) -> Result<String, TransportError> {
        let key = (request.template_id, request.bindings_digest.clone());
        if let Some(r) = self.fixtures.get(&key) {
            return Ok(r.clone());
        }
        if self.strict {
            return Err(TransportError::FixtureMiss {
                template_id: request.template_id,
                digest: request.bindings_digest.clone(),
            });
        }
        Ok(fallback_response(request))
    }
}

fn digest_seed(digest: &str) -> u64 {
    let prefix = digest.get(..16).unwrap_or("0");
    u64::from_str_radix(prefix, 16).unwrap_or(0)
}

/// Well-formed, content-poor responses for requests without a fixture.
fn fallback_response(request: &ChatRequest) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(digest_seed(&request.bindings_digest));
    let get = |k: &str| request.bindings.get(k).map(String::as_str).unwrap_or("");
    match request.template_id {
        TemplateId::Extraction => fallback_extraction(get("query"), get("context"), &mut rng),
        TemplateId::Fusion => {
            let parts: Vec<&str> = [get("LLM-KG"), get("E-G")]
                .into_iter()
                .map(str::trim)
                .filter(|s| !s.is_empty() && !s.eq_ignore_ascii_case("none"))
                .collect();
            if parts.is_empty() {
                "None".into()
            } else {
                parts.concat()
            }
        }
        TemplateId::LpCot => {
            let ans = if rng.random_bool(0.5) { "YES" } else { "NO" };
            format!("A and B belong to the same domain.\n<result>{ans}</result>")
        }
        TemplateId::LpPlain | TemplateId::LpDoc | TemplateId::LpCon | TemplateId::LpWiki => {
            if rng.random_bool(0.5) { "YES" } else { "NO" }.into()
        }
        TemplateId::QaCommand => String::new(),
        TemplateId::QaAnswer => "None".into(),
    }
}

fn fallback_extraction(query: &str, context: &str, rng: &mut ChaCha8Rng) -> String {
    let query = query.trim();
    if context.trim().is_empty() || query.is_empty() {
        return "None".into();
    }
    let stop = default_stopwords();
    let q = query.to_lowercase();
    let mut candidates = BTreeSet::new();
    for seg in phrase_segments(context) {
        for w in seg.windows(2) {
            let ok = w.iter().all(|t| t.len() >= 3 && !stop.contains(t) && !t.chars().all(|c| c.is_ascii_digit()));
            let phrase = w.join(" ");
            if ok && phrase != q {
                candidates.insert(phrase);
            }
        }
    }
    let candidates: Vec<String> = candidates.into_iter().collect();
    if candidates.is_empty() {
        return "None".into();
    }
    let n = candidates.len().min(2);
    let mut picked = BTreeSet::new();
    while picked.len() < n {
        picked.insert(rng.random_range(0..candidates.len()));
    }
    picked
        .into_iter()
        .map(|i| {
            let rel = RelationType::ALL[rng.random_range(0..RelationType::ALL.len())];
            format!("({query}, {}, {})", rel.prompt_name(), candidates[i])
        })
        .collect()
}
