//! Prerequisite link prediction over entity pairs with the LP prompt family.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, RetrievalBudget};
use crate::graph::normalize_surface;
use crate::llm::{bindings, Bindings, LlmError, LlmGateway, TemplateId};
use crate::metrics::Confusion;

#[derive(Debug, thiserror::Error)]
pub enum LpError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("dataset line {line}: {message}")]
    Dataset { line: usize, message: String },
    #[error("no YES/NO decision in response {0:?}")]
    Parse(String),
    #[error("variant {variant} needs {needs}")]
    MissingAttachment { variant: LpVariant, needs: &'static str },
    #[error("pair ({a}, {b}): {source}")]
    Pair {
        a: String,
        b: String,
        #[source]
        source: Box<LpError>,
    },
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("{predictions} predictions for {pairs} pairs")]
    LengthMismatch { predictions: usize, pairs: usize },
    #[error("wiki store: {0}")]
    Wiki(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    #[default]
    Test,
}

/// A labelled pair: `label == 1` means `entity_a` is a prerequisite of `entity_b`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LpPair {
    pub entity_a: String,
    pub entity_b: String,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LpDataset {
    pub domain: String,
    pub split: Split,
    pub pairs: Vec<LpPair>,
}

impl LpDataset {
    /// TSV rows `entity_a<TAB>entity_b<TAB>label`; an optional header row is skipped.
    pub fn from_tsv(text: &str, domain: &str, split: Split) -> Result<Self, LpError> {
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(LpError::Dataset { line: line_no, message: format!("expected 3 columns, got {}", cols.len()) });
            }
            let label = match cols[2].trim() {
                "0" => 0,
                "1" => 1,
                _ if i == 0 => continue,
                other => return Err(LpError::Dataset { line: line_no, message: format!("label {other:?} is not 0 or 1") }),
            };
            let norm = |s: &str| {
                normalize_surface(s).map_err(|e| LpError::Dataset { line: line_no, message: e.to_string() })
            };
            pairs.push(LpPair { entity_a: norm(cols[0])?, entity_b: norm(cols[1])?, label });
        }
        Ok(LpDataset { domain: domain.to_string(), split, pairs })
    }

    pub fn load(path: &Path, domain: &str, split: Split) -> Result<Self, LpError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| LpError::Io { path: path.display().to_string(), source })?;
        Self::from_tsv(&text, domain, split)
    }

    /// All entities appearing in any pair.
    pub fn entities(&self) -> BTreeSet<String> {
        self.pairs.iter().flat_map(|p| [p.entity_a.clone(), p.entity_b.clone()]).collect()
    }

    pub fn labels(&self) -> Vec<bool> {
        self.pairs.iter().map(|p| p.label == 1).collect()
    }

    /// Entities that `e` is a prerequisite of, and entities that are prerequisites of `e`.
    pub fn neighbours(&self, e: &str) -> (Vec<String>, Vec<String>) {
        let mut succ = BTreeSet::new();
        let mut pred = BTreeSet::new();
        for p in self.pairs.iter().filter(|p| p.label == 1) {
            if p.entity_a == e {
                succ.insert(p.entity_b.clone());
            }
            if p.entity_b == e {
                pred.insert(p.entity_a.clone());
            }
        }
        (succ.into_iter().collect(), pred.into_iter().collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpVariant {
    Plain,
    Cot,
    Doc,
    Con,
    Wiki,
}

impl LpVariant {
    pub const ALL: [LpVariant; 5] = [LpVariant::Plain, LpVariant::Cot, LpVariant::Doc, LpVariant::Con, LpVariant::Wiki];

    pub fn as_str(self) -> &'static str {
        match self {
            LpVariant::Plain => "plain",
            LpVariant::Cot => "cot",
            LpVariant::Doc => "doc",
            LpVariant::Con => "con",
            LpVariant::Wiki => "wiki",
        }
    }

    pub fn template(self) -> TemplateId {
        match self {
            LpVariant::Plain => TemplateId::LpPlain,
            LpVariant::Cot => TemplateId::LpCot,
            LpVariant::Doc => TemplateId::LpDoc,
            LpVariant::Con => TemplateId::LpCon,
            LpVariant::Wiki => TemplateId::LpWiki,
        }
    }
}

impl fmt::Display for LpVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LpVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LpVariant::ALL
            .into_iter()
            .find(|v| v.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown LP variant {s:?} (expected plain, cot, doc, con or wiki)"))
    }
}

/// Local entity -> paragraph lookup, loaded from a JSON object.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WikiStore {
    paragraphs: BTreeMap<String, String>,
}

impl WikiStore {
    pub fn from_json(text: &str) -> Result<Self, LpError> {
        let raw: BTreeMap<String, String> = serde_json::from_str(text).map_err(|e| LpError::Wiki(e.to_string()))?;
        let paragraphs = raw
            .into_iter()
            .filter_map(|(k, v)| normalize_surface(&k).ok().map(|k| (k, v)))
            .collect();
        Ok(WikiStore { paragraphs })
    }

    pub fn load(path: &Path) -> Result<Self, LpError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| LpError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    pub fn get(&self, entity: &str) -> Option<&str> {
        normalize_surface(entity).ok().and_then(|k| self.paragraphs.get(&k)).map(String::as_str)
    }
}

/// Optional material some variants need.
#[derive(Debug, Clone, Copy, Default)]
pub struct LpAttachments<'a> {
    pub corpus: Option<&'a Corpus>,
    pub train: Option<&'a LpDataset>,
    pub wiki: Option<&'a WikiStore>,
    pub budget: RetrievalBudget,
}

fn join_or_none(items: &[String]) -> String {
    if items.is_empty() {
        "None".into()
    } else {
        items.join(", ")
    }
}

/// Template and bindings for asking whether `a` is a prerequisite of `b`.
pub fn lp_bindings(
    variant: LpVariant,
    domain: &str,
    a: &str,
    b: &str,
    att: &LpAttachments<'_>,
) -> Result<(TemplateId, Bindings), LpError> {
    let mut binds = bindings([("domain", domain), ("entity_1", a), ("entity_2", b)]);
    match variant {
        LpVariant::Plain | LpVariant::Cot => {}
        LpVariant::Doc => {
            let corpus = att.corpus.ok_or(LpError::MissingAttachment { variant, needs: "a corpus" })?;
            let half = RetrievalBudget { max_docs: att.budget.max_docs, max_chars: att.budget.max_chars / 2 };
            let docs: Vec<String> =
                [a, b].iter().map(|e| corpus.retrieve(e, half).render()).filter(|s| !s.is_empty()).collect();
            binds.insert("documents".into(), if docs.is_empty() { "None".into() } else { docs.join("\n\n") });
        }
        LpVariant::Con => {
            let train = att.train.ok_or(LpError::MissingAttachment { variant, needs: "train-split neighbours" })?;
            for (i, e) in [(1, a), (2, b)] {
                let (succ, pred) = train.neighbours(e);
                binds.insert(format!("successors_{i}"), join_or_none(&succ));
                binds.insert(format!("predecessors_{i}"), join_or_none(&pred));
            }
        }
        LpVariant::Wiki => {
            let wiki = att.wiki.ok_or(LpError::MissingAttachment { variant, needs: "a wiki paragraph store" })?;
            binds.insert("wiki_1".into(), wiki.get(a).unwrap_or("None").to_string());
            binds.insert("wiki_2".into(), wiki.get(b).unwrap_or("None").to_string());
        }
    }
    Ok((variant.template(), binds))
}

fn first_decision(text: &str) -> Option<bool> {
    text.split(|c: char| !c.is_alphanumeric()).find_map(|w| {
        if w.eq_ignore_ascii_case("yes") {
            Some(true)
        } else if w.eq_ignore_ascii_case("no") {
            Some(false)
        } else {
            None
        }
    })
}

/// Plain mode: the first standalone YES/NO word decides. CoT mode: the content
/// of the first `<result>…</result>` tag decides.
pub fn parse_yes_no(text: &str, cot: bool) -> Result<bool, LpError> {
    let fail = || LpError::Parse(text.chars().take(200).collect());
    if !cot {
        return first_decision(text).ok_or_else(fail);
    }
    let lower = text.to_ascii_lowercase();
    let open = lower.find("<result>").ok_or_else(fail)?;
    let start = open + "<result>".len();
    let end = lower[start..].find("</result>").map(|e| start + e).ok_or_else(fail)?;
    first_decision(&text[start..end]).ok_or_else(fail)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairPrediction {
    pub entity_a: String,
    pub entity_b: String,
    /// `None` when the response carried no decision.
    pub prediction: Option<bool>,
    pub exchange_ref: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parse_error: Option<String>,
}

/// Asks the model and records the decision, keeping parse failures as data.
pub fn run_pair(
    llm: &LlmGateway,
    variant: LpVariant,
    domain: &str,
    a: &str,
    b: &str,
    att: &LpAttachments<'_>,
) -> Result<PairPrediction, LpError> {
    let wrap = |e: LpError| LpError::Pair { a: a.to_string(), b: b.to_string(), source: Box::new(e) };
    let (template, binds) = lp_bindings(variant, domain, a, b, att).map_err(wrap)?;
    let ex = llm.complete(template, binds).map_err(|e| wrap(e.into()))?;
    let parsed = parse_yes_no(&ex.raw_response, variant == LpVariant::Cot);
    Ok(PairPrediction {
        entity_a: a.to_string(),
        entity_b: b.to_string(),
        prediction: parsed.as_ref().ok().copied(),
        exchange_ref: ex.id,
        parse_error: parsed.err().map(|e| e.to_string()),
    })
}

/// `true` means (a, PrerequisiteOf, b).
pub fn predict_pair(
    llm: &LlmGateway,
    variant: LpVariant,
    domain: &str,
    a: &str,
    b: &str,
    att: &LpAttachments<'_>,
) -> Result<bool, LpError> {
    let p = run_pair(llm, variant, domain, a, b, att)?;
    p.prediction.ok_or_else(|| LpError::Pair {
        a: a.to_string(),
        b: b.to_string(),
        source: Box::new(LpError::Parse(p.parse_error.unwrap_or_default())),
    })
}

/// Predicts every pair of the dataset; transport failures become parse-less predictions.
pub fn predict_dataset(
    llm: &LlmGateway,
    variant: LpVariant,
    dataset: &LpDataset,
    att: &LpAttachments<'_>,
) -> Vec<PairPrediction> {
    llm.map_bounded(&dataset.pairs, |p| {
        run_pair(llm, variant, &dataset.domain, &p.entity_a, &p.entity_b, att).unwrap_or_else(|e| PairPrediction {
            entity_a: p.entity_a.clone(),
            entity_b: p.entity_b.clone(),
            prediction: None,
            exchange_ref: String::new(),
            parse_error: Some(e.to_string()),
        })
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpMetrics {
    pub accuracy: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub confusion: Confusion,
    pub unparsed: usize,
    pub excluded: usize,
}

/// Scores predictions against labels. Undecided predictions count as wrong when
/// `strict` (a missed positive or a false alarm), otherwise they are excluded.
pub fn evaluate_lp(dataset: &LpDataset, predictions: &[Option<bool>], strict: bool) -> Result<LpMetrics, LpError> {
    if predictions.len() != dataset.pairs.len() {
        return Err(LpError::LengthMismatch { predictions: predictions.len(), pairs: dataset.pairs.len() });
    }
    let mut c = Confusion::default();
    let mut unparsed = 0;
    let mut excluded = 0;
    for (p, pair) in predictions.iter().zip(&dataset.pairs) {
        let gold = pair.label == 1;
        match p {
            Some(p) => c.add(*p, gold),
            None => {
                unparsed += 1;
                if strict {
                    c.add(!gold, gold);
                } else {
                    excluded += 1;
                }
            }
        }
    }
    Ok(LpMetrics {
        accuracy: c.accuracy(),
        f1: c.f1(),
        precision: c.precision(),
        recall: c.recall(),
        confusion: c,
        unparsed,
        excluded,
    })
}
