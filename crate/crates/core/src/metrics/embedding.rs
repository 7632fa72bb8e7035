use std::collections::BTreeMap;
use std::sync::Mutex;
use std::time::Duration;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::MetricError;
use crate::corpus::tokenize;

/// Maps text to a unit-norm vector; deterministic per (name, text).
pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> &str;
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>, MetricError>;
}

fn l2_normalize(mut v: Vec<f64>) -> Option<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Some(v)
}

/// Signed feature hashing of lowercase tokens. Text without tokens hashes as a
/// single feature so every input has a unit vector.
#[derive(Debug, Clone)]
pub struct HashedBowProvider {
    name: String,
    dimension: usize,
    seed: u64,
}

impl Default for HashedBowProvider {
    fn default() -> Self {
        Self::new(256, 0)
    }
}

impl HashedBowProvider {
    pub fn new(dimension: usize, seed: u64) -> Self {
        HashedBowProvider { name: format!("hashed-bow-{dimension}-{seed}"), dimension: dimension.max(1), seed }
    }

    fn feature(&self, token: &str) -> (usize, f64) {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(token.as_bytes());
        let d = h.finalize();
        let idx = u64::from_le_bytes(d[..8].try_into().expect("8 bytes")) % self.dimension as u64;
        let sign = if d[8] & 1 == 0 { 1.0 } else { -1.0 };
        (idx as usize, sign)
    }
}

impl EmbeddingProvider for HashedBowProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, MetricError> {
        let mut tokens = tokenize(text);
        if tokens.is_empty() {
            tokens.push(text.to_string());
        }
        let mut v = vec![0.0; self.dimension];
        for t in &tokens {
            let (i, s) = self.feature(t);
            v[i] += s;
        }
        // colliding tokens can cancel out; fall back to the whole-text feature
        l2_normalize(v)
            .or_else(|| {
                let mut v = vec![0.0; self.dimension];
                v[self.feature(text).0] = 1.0;
                Some(v)
            })
            .ok_or_else(|| MetricError::Embedding { provider: self.name.clone(), message: "zero vector".into() })
    }
}

/// Precomputed vectors looked up by exact text.
#[derive(Debug, Clone)]
pub struct TableProvider {
    name: String,
    dimension: usize,
    vectors: BTreeMap<String, Vec<f64>>,
}

impl TableProvider {
    pub fn new(name: &str, dimension: usize) -> Self {
        TableProvider { name: name.to_string(), dimension, vectors: BTreeMap::new() }
    }

    /// Stores the normalized vector. Zero vectors are ignored.
    pub fn insert(&mut self, text: &str, vector: Vec<f64>) {
        if let Some(v) = l2_normalize(vector) {
            self.vectors.insert(text.to_string(), v);
        }
    }
}

impl EmbeddingProvider for TableProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, MetricError> {
        self.vectors
            .get(text)
            .cloned()
            .ok_or_else(|| MetricError::Embedding { provider: self.name.clone(), message: format!("no vector for {text:?}") })
    }
}

/// Remote embedding service: POST `{model, input: [text]}`, read
/// `data[0].embedding`. Results are cached for the provider's lifetime.
pub struct HttpEmbeddingProvider {
    agent: ureq::Agent,
    endpoint: String,
    model: String,
    token: Option<String>,
    dimension: usize,
    cache: Mutex<BTreeMap<String, Vec<f64>>>,
}

impl HttpEmbeddingProvider {
    /// `auth_env` names the environment variable holding the bearer token.
    pub fn new(endpoint: &str, model: &str, auth_env: &str, dimension: usize) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(60)))
            .http_status_as_error(false)
            .build()
            .into();
        HttpEmbeddingProvider {
            agent,
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            token: std::env::var(auth_env).ok(),
            dimension,
            cache: Mutex::new(BTreeMap::new()),
        }
    }

    fn err(&self, message: String) -> MetricError {
        MetricError::Embedding { provider: self.model.clone(), message }
    }
}

impl EmbeddingProvider for HttpEmbeddingProvider {
    fn name(&self) -> &str {
        &self.model
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, MetricError> {
        if let Some(v) = self.cache.lock().expect("embedding cache poisoned").get(text) {
            return Ok(v.clone());
        }
        let mut req = self.agent.post(&self.endpoint);
        if let Some(t) = &self.token {
            req = req.header("Authorization", format!("Bearer {t}"));
        }
        let mut resp = req
            .send_json(json!({"model": self.model, "input": [text]}))
            .map_err(|e| self.err(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().map_err(|e| self.err(e.to_string()))?;
        if status != 200 {
            return Err(self.err(format!("HTTP status {status}")));
        }
        let v: Value = serde_json::from_str(&body).map_err(|e| self.err(e.to_string()))?;
        let raw: Vec<f64> = v
            .pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .map(|a| a.iter().filter_map(Value::as_f64).collect())
            .ok_or_else(|| self.err("missing data[0].embedding".into()))?;
        let unit = l2_normalize(raw).ok_or_else(|| self.err("zero vector".into()))?;
        self.cache.lock().expect("embedding cache poisoned").insert(text.to_string(), unit.clone());
        Ok(unit)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hashed_vectors_are_unit_and_reproducible() {
        let p = HashedBowProvider::default();
        for text in ["x", "neural machine translation", "", "a a a a", "(!)"] {
            let v = p.embed(text).unwrap();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-9, "{text:?}");
            assert_eq!(v, HashedBowProvider::default().embed(text).unwrap());
        }
        assert_ne!(p.embed("x").unwrap(), HashedBowProvider::new(256, 7).embed("x").unwrap());
    }
}
