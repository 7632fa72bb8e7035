//! Scoring: list similarity, hit rate, accuracy/F1, rating summaries, Cohen's
//! kappa, entity counts and relation-type distribution.

mod embedding;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::graph::{normalize_surface, KnowledgeGraph, RelationType};

pub use embedding::{EmbeddingProvider, HashedBowProvider, HttpEmbeddingProvider, TableProvider};

#[derive(Debug, thiserror::Error)]
pub enum MetricError {
    #[error("{0} list is empty")]
    Empty(&'static str),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("score {score} for item {item_id:?} is outside the scale {min}..={max}")]
    OutOfScale { item_id: String, score: i64, min: i64, max: i64 },
    #[error("duplicate rating for item {item_id:?} by rater {rater_id:?}")]
    DuplicateRating { item_id: String, rater_id: String },
    #[error("rating sheet line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error("embedding provider {provider}: {message}")]
    Embedding { provider: String, message: String },
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Mean pairwise cosine similarity between the two lists' embeddings.
/// Providers return unit vectors, so the dot product is the cosine.
pub fn similarity_score(pred: &[String], gold: &[String], provider: &dyn EmbeddingProvider) -> Result<f64, MetricError> {
    if pred.is_empty() {
        return Err(MetricError::Empty("predicted"));
    }
    if gold.is_empty() {
        return Err(MetricError::Empty("gold"));
    }
    let pv: Vec<Vec<f64>> = pred.iter().map(|p| provider.embed(p)).collect::<Result<_, _>>()?;
    let gv: Vec<Vec<f64>> = gold.iter().map(|g| provider.embed(g)).collect::<Result<_, _>>()?;
    let mut total = 0.0;
    for m in &pv {
        for n in &gv {
            total += cosine(m, n);
        }
    }
    Ok(total / (pred.len() * gold.len()) as f64)
}

fn normalized_set(items: &[String]) -> BTreeSet<String> {
    items.iter().filter_map(|s| normalize_surface(s).ok()).collect()
}

/// Percentage of gold entities matched exactly (after normalization) by a prediction.
pub fn hit_rate(pred: &[String], gold: &[String]) -> Result<f64, MetricError> {
    if gold.is_empty() {
        return Err(MetricError::Empty("gold"));
    }
    let p = normalized_set(pred);
    let hits = gold.iter().filter(|g| normalize_surface(g).is_ok_and(|g| p.contains(&g))).count();
    Ok(100.0 * hits as f64 / gold.len() as f64)
}

pub fn accuracy<T: PartialEq>(preds: &[T], golds: &[T]) -> Result<f64, MetricError> {
    if preds.len() != golds.len() {
        return Err(MetricError::LengthMismatch { left: preds.len(), right: golds.len() });
    }
    if preds.is_empty() {
        return Err(MetricError::Empty("prediction"));
    }
    let correct = preds.iter().zip(golds).filter(|(p, g)| p == g).count();
    Ok(correct as f64 / preds.len() as f64)
}

/// Binary confusion counts with the positive class `true`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn from_binary(preds: &[bool], golds: &[bool]) -> Result<Self, MetricError> {
        if preds.len() != golds.len() {
            return Err(MetricError::LengthMismatch { left: preds.len(), right: golds.len() });
        }
        let mut c = Confusion::default();
        for (&p, &g) in preds.iter().zip(golds) {
            c.add(p, g);
        }
        Ok(c)
    }

    pub fn add(&mut self, pred: bool, gold: bool) {
        match (pred, gold) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => (self.tp + self.tn) as f64 / n as f64,
        }
    }

    pub fn precision(&self) -> f64 {
        match self.tp + self.fp {
            0 => 0.0,
            d => self.tp as f64 / d as f64,
        }
    }

    pub fn recall(&self) -> f64 {
        match self.tp + self.fn_ {
            0 => 0.0,
            d => self.tp as f64 / d as f64,
        }
    }

    /// Harmonic mean of precision and recall, computed as 2TP / (2TP + FP + FN);
    /// 0 when there are no true positives.
    pub fn f1(&self) -> f64 {
        match 2 * self.tp + self.fp + self.fn_ {
            0 => 0.0,
            d => (2 * self.tp) as f64 / d as f64,
        }
    }
}

pub fn f1_score(preds: &[bool], golds: &[bool]) -> Result<f64, MetricError> {
    Ok(Confusion::from_binary(preds, golds)?.f1())
}

/// Chance-corrected agreement between two raters. When expected agreement is
/// 1 (both raters used a single identical category) the result is 1 if they
/// agree everywhere and 0 otherwise.
pub fn cohen_kappa<T: Ord>(a: &[T], b: &[T]) -> Result<f64, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch { left: a.len(), right: b.len() });
    }
    if a.is_empty() {
        return Err(MetricError::Empty("rating"));
    }
    let n = a.len();
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count();
    let mut ca: BTreeMap<&T, usize> = BTreeMap::new();
    let mut cb: BTreeMap<&T, usize> = BTreeMap::new();
    for x in a {
        *ca.entry(x).or_default() += 1;
    }
    for y in b {
        *cb.entry(y).or_default() += 1;
    }
    let chance: usize = ca.iter().map(|(k, c)| c * cb.get(k).copied().unwrap_or(0)).sum();
    let p_o = agree as f64 / n as f64;
    let p_e = chance as f64 / (n * n) as f64;
    if chance == n * n {
        return Ok(if agree == n { 1.0 } else { 0.0 });
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rating {
    pub item_id: String,
    pub rater_id: String,
    pub score: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingSheet {
    pub scale: (i64, i64),
    pub items: Vec<Rating>,
}

impl RatingSheet {
    pub fn new(scale: (i64, i64), items: Vec<Rating>) -> Result<Self, MetricError> {
        let sheet = RatingSheet { scale, items };
        sheet.validate()?;
        Ok(sheet)
    }

    pub fn validate(&self) -> Result<(), MetricError> {
        let (min, max) = self.scale;
        let mut seen = BTreeSet::new();
        for r in &self.items {
            if r.score < min || r.score > max {
                return Err(MetricError::OutOfScale { item_id: r.item_id.clone(), score: r.score, min, max });
            }
            if !seen.insert((&r.item_id, &r.rater_id)) {
                return Err(MetricError::DuplicateRating { item_id: r.item_id.clone(), rater_id: r.rater_id.clone() });
            }
        }
        Ok(())
    }

    /// CSV with columns `item_id,rater_id,score` and an optional fourth `group`
    /// column. A header row is detected by a non-numeric score field.
    pub fn from_csv(text: &str, scale: (i64, i64)) -> Result<Self, MetricError> {
        let mut items = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() < 3 || cols.len() > 4 {
                return Err(MetricError::Csv { line: i + 1, message: format!("expected 3 or 4 columns, got {}", cols.len()) });
            }
            let score = match cols[2].parse::<i64>() {
                Ok(s) => s,
                Err(_) if i == 0 => continue,
                Err(e) => return Err(MetricError::Csv { line: i + 1, message: format!("score {:?}: {e}", cols[2]) }),
            };
            items.push(Rating {
                item_id: cols[0].to_string(),
                rater_id: cols[1].to_string(),
                score,
                group: cols.get(3).filter(|g| !g.is_empty()).map(|g| g.to_string()),
            });
        }
        Self::new(scale, items)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatingStats {
    pub n: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl RatingStats {
    pub fn of(scores: &[i64]) -> Option<Self> {
        if scores.is_empty() {
            return None;
        }
        let n = scores.len() as f64;
        let mean = scores.iter().map(|&s| s as f64).sum::<f64>() / n;
        let var = scores.iter().map(|&s| (s as f64 - mean).powi(2)).sum::<f64>() / n;
        Some(RatingStats { n: scores.len(), mean, std: var.sqrt() })
    }

    /// `2.92 ± 0.32` style.
    pub fn display(&self) -> String {
        format!("{:.2} ± {:.2}", self.mean, self.std)
    }
}

/// Mean and population std per group; ungrouped ratings fall under `"all"`.
pub fn rating_summary(sheet: &RatingSheet) -> Result<BTreeMap<String, RatingStats>, MetricError> {
    if sheet.items.is_empty() {
        return Err(MetricError::Empty("rating"));
    }
    sheet.validate()?;
    let mut groups: BTreeMap<String, Vec<i64>> = BTreeMap::new();
    for r in &sheet.items {
        groups.entry(r.group.clone().unwrap_or_else(|| "all".into())).or_default().push(r.score);
    }
    Ok(groups.into_iter().filter_map(|(g, s)| RatingStats::of(&s).map(|st| (g, st))).collect())
}

/// Mean list length; 0 for no lists.
pub fn entity_count_stats(answers: &[Vec<String>]) -> f64 {
    if answers.is_empty() {
        return 0.0;
    }
    answers.iter().map(Vec::len).sum::<usize>() as f64 / answers.len() as f64
}

/// Percentage of triplets per relation type (all seven keys present).
pub fn relation_distribution(kg: &KnowledgeGraph) -> Result<BTreeMap<RelationType, f64>, MetricError> {
    if kg.is_empty() {
        return Err(MetricError::Empty("graph triplet"));
    }
    let mut counts: BTreeMap<RelationType, usize> = RelationType::ALL.iter().map(|r| (*r, 0)).collect();
    for t in kg.triplets() {
        *counts.entry(t.relation).or_default() += 1;
    }
    let n = kg.len() as f64;
    Ok(counts.into_iter().map(|(r, c)| (r, 100.0 * c as f64 / n)).collect())
}

/// Raw [-1, 1] similarity or the ×100 presentation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreScale {
    #[default]
    Raw,
    Percent,
}

impl ScoreScale {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            ScoreScale::Raw => x,
            ScoreScale::Percent => 100.0 * x,
        }
    }
}
