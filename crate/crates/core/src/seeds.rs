//! Seed entity mining: TF-IDF document vectors, seeded k-means, and
//! class-based TF-IDF term scoring per cluster.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{phrase_segments, tokenize, Corpus};
use crate::stopwords::default_stopwords;

#[derive(Debug, thiserror::Error)]
pub enum SeedError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("n_clusters ({n_clusters}) exceeds the document count ({documents})")]
    TooManyClusters { n_clusters: usize, documents: usize },
    #[error("invalid seed config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeedConfig {
    pub n_clusters: usize,
    pub terms_per_cluster: usize,
    /// Minimum term length in characters.
    pub min_term_len: usize,
    /// Minimum corpus-wide occurrence count of a candidate term.
    pub min_term_freq: u64,
    pub stopwords: BTreeSet<String>,
    pub ngram_range: (usize, usize),
    pub rng_seed: u64,
    pub max_iterations: usize,
}

impl Default for SeedConfig {
    fn default() -> Self {
        SeedConfig {
            n_clusters: 10,
            terms_per_cluster: 10,
            min_term_len: 3,
            min_term_freq: 2,
            stopwords: default_stopwords(),
            ngram_range: (1, 3),
            rng_seed: 42,
            max_iterations: 100,
        }
    }
}

impl SeedConfig {
    pub fn validate(&self) -> Result<(), SeedError> {
        if self.n_clusters == 0 {
            return Err(SeedError::InvalidConfig("n_clusters must be at least 1".into()));
        }
        let (lo, hi) = self.ngram_range;
        if !(1 <= lo && lo <= hi && hi <= 4) {
            return Err(SeedError::InvalidConfig(format!(
                "ngram_range ({lo}, {hi}) must satisfy 1 <= lo <= hi <= 4"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    /// (doc_id, cluster_id) in corpus order.
    pub assignments: Vec<(String, usize)>,
    pub n_clusters: usize,
    pub iterations: usize,
}

impl ClusterAssignment {
    pub fn cluster_of(&self, doc_id: &str) -> Option<usize> {
        self.assignments.iter().find(|(d, _)| d == doc_id).map(|(_, c)| *c)
    }
}

type SparseVec = Vec<(usize, f64)>;

fn doc_vectors(corpus: &Corpus, stopwords: &BTreeSet<String>) -> (Vec<SparseVec>, usize) {
    let mut vocab: BTreeMap<String, usize> = BTreeMap::new();
    let docs: Vec<BTreeMap<String, f64>> = corpus
        .documents()
        .iter()
        .map(|d| {
            let mut tf: BTreeMap<String, f64> = BTreeMap::new();
            for tok in tokenize(&d.text()) {
                if !stopwords.contains(&tok) {
                    *tf.entry(tok).or_default() += 1.0;
                }
            }
            tf
        })
        .collect();
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for tf in &docs {
        for term in tf.keys() {
            *df.entry(term.as_str()).or_default() += 1;
        }
    }
    for (i, term) in df.keys().enumerate() {
        vocab.insert(term.to_string(), i);
    }
    let n = docs.len() as f64;
    let vectors = docs
        .iter()
        .map(|tf| {
            let mut v: SparseVec = tf
                .iter()
                .map(|(t, &c)| {
                    let idf = ((1.0 + n) / (1.0 + df[t.as_str()] as f64)).ln() + 1.0;
                    (vocab[t], c * idf)
                })
                .collect();
            let norm = v.iter().map(|(_, x)| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                v.iter_mut().for_each(|(_, x)| *x /= norm);
            }
            v
        })
        .collect();
    (vectors, vocab.len())
}

fn sq_dist(x: &SparseVec, x_norm2: f64, c: &[f64], c_norm2: f64) -> f64 {
    let dot: f64 = x.iter().map(|&(i, v)| v * c[i]).sum();
    (x_norm2 + c_norm2 - 2.0 * dot).max(0.0)
}

fn dense(x: &SparseVec, dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for &(i, v) in x {
        out[i] = v;
    }
    out
}

/// Seeded k-means++ over L2-normalized TF-IDF vectors. Ties go to the lowest cluster id.
pub fn cluster_documents(corpus: &Corpus, config: &SeedConfig) -> Result<ClusterAssignment, SeedError> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(SeedError::EmptyCorpus);
    }
    let k = config.n_clusters;
    if k > corpus.len() {
        return Err(SeedError::TooManyClusters { n_clusters: k, documents: corpus.len() });
    }
    let (vectors, dim) = doc_vectors(corpus, &config.stopwords);
    let norms: Vec<f64> = vectors.iter().map(|v| v.iter().map(|(_, x)| x * x).sum()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);

    let mut chosen: Vec<usize> = vec![rng.random_range(0..vectors.len())];
    let mut centroids: Vec<Vec<f64>> = vec![dense(&vectors[chosen[0]], dim)];
    while centroids.len() < k {
        let dists: Vec<f64> = vectors
            .iter()
            .zip(&norms)
            .map(|(x, &xn)| {
                centroids
                    .iter()
                    .map(|c| sq_dist(x, xn, c, c.iter().map(|v| v * v).sum()))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = dists.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = dists.iter().rposition(|d| *d > 0.0).expect("positive total");
            for (i, d) in dists.iter().enumerate() {
                if *d > 0.0 && target < *d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            (0..vectors.len()).find(|i| !chosen.contains(i)).expect("k <= document count")
        };
        chosen.push(next);
        centroids.push(dense(&vectors[next], dim));
    }

    let mut assign = vec![usize::MAX; vectors.len()];
    let mut iterations = 0;
    while iterations < config.max_iterations.max(1) {
        iterations += 1;
        let cnorms: Vec<f64> = centroids.iter().map(|c| c.iter().map(|v| v * v).sum()).collect();
        let mut changed = false;
        for (i, x) in vectors.iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (ci, c) in centroids.iter().enumerate() {
                let d = sq_dist(x, norms[i], c, cnorms[ci]);
                if d < best_d - 1e-12 {
                    best = ci;
                    best_d = d;
                }
            }
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        for (ci, centroid) in centroids.iter_mut().enumerate() {
            let members: Vec<usize> = (0..vectors.len()).filter(|&i| assign[i] == ci).collect();
            if members.is_empty() {
                continue;
            }
            let mut sum = vec![0.0; dim];
            for &m in &members {
                for &(j, v) in &vectors[m] {
                    sum[j] += v;
                }
            }
            let n = members.len() as f64;
            sum.iter_mut().for_each(|v| *v /= n);
            *centroid = sum;
        }
    }

    Ok(ClusterAssignment {
        assignments: corpus
            .documents()
            .iter()
            .zip(assign)
            .map(|(d, c)| (d.doc_id.clone(), c))
            .collect(),
        n_clusters: k,
        iterations,
    })
}

/// Class-based TF-IDF: `score(t,c) = count(t,c)/total(c) * ln(1 + A/f_t)` with
/// `A` the mean per-cluster term total and `f_t` the term's count over all clusters.
/// Returns term -> per-cluster scores; empty clusters score 0.
pub fn ctf_idf(term_counts_per_cluster: &[BTreeMap<String, u64>]) -> BTreeMap<String, Vec<f64>> {
    let k = term_counts_per_cluster.len();
    let totals: Vec<u64> = term_counts_per_cluster.iter().map(|m| m.values().sum()).collect();
    let avg = if k == 0 { 0.0 } else { totals.iter().sum::<u64>() as f64 / k as f64 };
    let mut freq: BTreeMap<&str, u64> = BTreeMap::new();
    for m in term_counts_per_cluster {
        for (t, &c) in m {
            *freq.entry(t.as_str()).or_default() += c;
        }
    }
    let mut out = BTreeMap::new();
    for (term, &f_t) in &freq {
        let mut scores = vec![0.0; k];
        if f_t > 0 {
            let idf = (1.0 + avg / f_t as f64).ln();
            for (c, m) in term_counts_per_cluster.iter().enumerate() {
                let count = m.get(*term).copied().unwrap_or(0);
                if count > 0 && totals[c] > 0 {
                    scores[c] = count as f64 / totals[c] as f64 * idf;
                }
            }
        }
        out.insert(term.to_string(), scores);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedProvenance {
    pub cluster_id: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SeedList {
    pub entities: Vec<String>,
    pub provenance: BTreeMap<String, SeedProvenance>,
}

impl SeedList {
    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    /// Builds a list with no provenance, e.g. user-supplied seeds.
    pub fn from_entities<I: IntoIterator<Item = String>>(items: I) -> Self {
        let mut seen = BTreeSet::new();
        let entities = items
            .into_iter()
            .filter_map(|s| crate::graph::normalize_surface(&s).ok())
            .filter(|s| seen.insert(s.clone()))
            .collect();
        SeedList { entities, provenance: BTreeMap::new() }
    }

    /// One entity per line.
    pub fn to_text(&self) -> String {
        self.entities.iter().map(|e| format!("{e}\n")).collect()
    }

    pub fn from_text(text: &str) -> Self {
        Self::from_entities(text.lines().map(str::to_string))
    }

    /// `entity\tcluster_id\tscore`
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("entity\tcluster_id\tscore\n");
        for e in &self.entities {
            match self.provenance.get(e) {
                Some(p) => out.push_str(&format!("{e}\t{}\t{:.6}\n", p.cluster_id, p.score)),
                None => out.push_str(&format!("{e}\t\t\n")),
            }
        }
        out
    }
}

fn candidate_terms(text: &str, config: &SeedConfig) -> Vec<String> {
    let (lo, hi) = config.ngram_range;
    let stop = |t: &str| config.stopwords.contains(t) || t.chars().all(|c| c.is_numeric() || c == '-');
    let mut out = Vec::new();
    for seg in phrase_segments(text) {
        for n in lo..=hi {
            for w in seg.windows(n) {
                if stop(&w[0]) || stop(&w[n - 1]) {
                    continue;
                }
                let term = w.join(" ");
                if term.chars().count() < config.min_term_len || config.stopwords.contains(&term) {
                    continue;
                }
                out.push(term);
            }
        }
    }
    out
}

/// Top `terms_per_cluster` terms of each cluster by class-based TF-IDF, merged and
/// ordered by descending score then lexicographically.
pub fn generate_seed_entities(corpus: &Corpus, config: &SeedConfig) -> Result<SeedList, SeedError> {
    let clusters = cluster_documents(corpus, config)?;
    let mut counts: Vec<BTreeMap<String, u64>> = vec![BTreeMap::new(); clusters.n_clusters];
    let mut corpus_freq: BTreeMap<String, u64> = BTreeMap::new();
    for (doc, (_, cluster)) in corpus.documents().iter().zip(&clusters.assignments) {
        for term in candidate_terms(&doc.text(), config) {
            *corpus_freq.entry(term.clone()).or_default() += 1;
            *counts[*cluster].entry(term).or_default() += 1;
        }
    }
    for m in counts.iter_mut() {
        m.retain(|t, _| corpus_freq[t] >= config.min_term_freq);
    }
    let scores = ctf_idf(&counts);

    let mut best: BTreeMap<String, SeedProvenance> = BTreeMap::new();
    for cluster in 0..clusters.n_clusters {
        let mut ranked: Vec<(&String, f64)> = scores
            .iter()
            .map(|(t, s)| (t, s[cluster]))
            .filter(|(_, s)| *s > 0.0)
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        for (term, score) in ranked.into_iter().take(config.terms_per_cluster) {
            let better = match best.get(term) {
                Some(p) => score > p.score,
                None => true,
            };
            if better {
                best.insert(term.clone(), SeedProvenance { cluster_id: cluster, score });
            }
        }
    }
    let mut entities: Vec<String> = best.keys().cloned().collect();
    entities.sort_by(|a, b| best[b].score.total_cmp(&best[a].score).then_with(|| a.cmp(b)));
    Ok(SeedList { entities, provenance: best })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;

    fn corpus(bodies: &[&str]) -> Corpus {
        Corpus::from_documents(
            bodies
                .iter()
                .enumerate()
                .map(|(i, b)| Document::new(&format!("d{i:02}"), "", b, None).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn ctf_idf_hand_value() {
        // count 4 of total 8 in cluster 0; f_t = 5; A = (8 + 12) / 2 = 10
        let c0: BTreeMap<String, u64> = [("t".to_string(), 4), ("u".to_string(), 4)].into();
        let c1: BTreeMap<String, u64> = [("t".to_string(), 1), ("v".to_string(), 11)].into();
        let s = ctf_idf(&[c0, c1]);
        assert!((s["t"][0] - 0.5 * 3f64.ln()).abs() < 1e-12);
        assert!((s["t"][0] - 0.5493).abs() < 1e-4);
        assert_eq!(s["v"][0], 0.0);
    }

    #[test]
    fn ctf_idf_uniform_term() {
        // two clusters, each total 4; term "x" count 2 in each: f_t = 4 = A
        let c: BTreeMap<String, u64> = [("x".to_string(), 2), ("y".to_string(), 2)].into();
        let d: BTreeMap<String, u64> = [("x".to_string(), 2), ("z".to_string(), 2)].into();
        let s = ctf_idf(&[c, d]);
        for score in &s["x"] {
            assert!((score - 0.5 * 2f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn ctf_idf_empty_cluster_scores_zero() {
        let c: BTreeMap<String, u64> = [("x".to_string(), 3)].into();
        let s = ctf_idf(&[c, BTreeMap::new()]);
        assert_eq!(s["x"][1], 0.0);
        assert!(s["x"][0] > 0.0);
    }

    #[test]
    fn identical_documents_single_cluster() {
        let c = corpus(&["parsing trees", "parsing trees", "parsing trees", "parsing trees"]);
        let cfg = SeedConfig { n_clusters: 1, ..Default::default() };
        let a = cluster_documents(&c, &cfg).unwrap();
        assert!(a.assignments.iter().all(|(_, k)| *k == 0));
    }

    #[test]
    fn disjoint_documents_separate() {
        let c = corpus(&["syntax parsing treebank", "speech acoustics phoneme"]);
        for seed in 0..20 {
            let cfg = SeedConfig { n_clusters: 2, rng_seed: seed, ..Default::default() };
            let a = cluster_documents(&c, &cfg).unwrap();
            assert_ne!(a.assignments[0].1, a.assignments[1].1, "seed {seed}");
        }
    }

    #[test]
    fn too_many_clusters_names_both_values() {
        let c = corpus(&["a b c", "d e f"]);
        let cfg = SeedConfig { n_clusters: 3, ..Default::default() };
        let err = cluster_documents(&c, &cfg).unwrap_err();
        assert!(matches!(err, SeedError::TooManyClusters { n_clusters: 3, documents: 2 }));
        let msg = err.to_string();
        assert!(msg.contains('3') && msg.contains('2'));
    }

    #[test]
    fn invalid_ngram_range() {
        let cfg = SeedConfig { ngram_range: (2, 5), ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = SeedConfig { ngram_range: (3, 2), ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn dominant_bigram_first() {
        let c = corpus(&[
            "Machine translation quality improves with attention.",
            "We evaluate machine translation systems on news data.",
            "Robust decoding for low resource languages.",
        ]);
        let cfg = SeedConfig { n_clusters: 1, ngram_range: (2, 2), ..Default::default() };
        let seeds = generate_seed_entities(&c, &cfg).unwrap();
        assert_eq!(seeds.entities.first().map(String::as_str), Some("machine translation"));
    }

    #[test]
    fn zero_terms_per_cluster() {
        let c = corpus(&["machine translation", "machine translation"]);
        let cfg = SeedConfig { n_clusters: 1, terms_per_cluster: 0, ..Default::default() };
        assert!(generate_seed_entities(&c, &cfg).unwrap().is_empty());
    }

    #[test]
    fn stopwords_never_seeded() {
        let c = corpus(&["the model and the method", "the model and the method task results"]);
        let cfg = SeedConfig { n_clusters: 1, ..Default::default() };
        let seeds = generate_seed_entities(&c, &cfg).unwrap();
        for e in &seeds.entities {
            assert!(!cfg.stopwords.contains(e), "{e}");
        }
    }

    #[test]
    fn text_round_trip() {
        let s = SeedList::from_entities(vec!["Semantic Parsing".into(), "bleu".into(), "semantic parsing".into()]);
        assert_eq!(s.entities, vec!["semantic parsing", "bleu"]);
        assert_eq!(SeedList::from_text(&s.to_text()).entities, s.entities);
    }
}
