//! Corpus ingestion, inverted index and entity-anchored retrieval.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const CORPUS_FORMAT: &str = "scikg-corpus";
pub const CORPUS_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_CONTEXT_CHARS: usize = 4000;
/// Longest phrase (in tokens) stored in the index.
pub const MAX_INDEXED_NGRAM: usize = 4;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("duplicate doc_id {0:?}")]
    DuplicateDocId(String),
    #[error("document {0:?} has an empty body")]
    EmptyBody(String),
    #[error("corpus file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported corpus file {found:?} (expected {CORPUS_FORMAT} v{CORPUS_FORMAT_VERSION})")]
    Version { found: String },
    #[error("stored index does not match the documents")]
    IndexMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Jsonl,
    Tsv,
}

impl CorpusFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tsv") => CorpusFormat::Tsv,
            _ => CorpusFormat::Jsonl,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    #[serde(default)]
    pub title: String,
    pub body: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub year: Option<i32>,
}

impl Document {
    /// Title and body are whitespace-normalized; an empty body is rejected.
    pub fn new(doc_id: &str, title: &str, body: &str, year: Option<i32>) -> Result<Self, CorpusError> {
        let body = collapse_ws(body);
        if body.is_empty() {
            return Err(CorpusError::EmptyBody(doc_id.to_string()));
        }
        Ok(Document { doc_id: doc_id.trim().to_string(), title: collapse_ws(title), body, year })
    }

    /// The text searched by retrieval and mined for seed terms.
    pub fn text(&self) -> String {
        if self.title.is_empty() {
            self.body.clone()
        } else {
            format!("{}\n{}", self.title, self.body)
        }
    }
}

fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn fold(c: char) -> char {
    c.to_lowercase().next().unwrap_or(c)
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '-'
}

/// Case-folded token spans `(start_char, end_char, token)`.
fn token_spans(text: &str) -> Vec<(usize, usize, String)> {
    let chars: Vec<char> = text.chars().map(fold).collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if !is_word_char(chars[i]) {
            i += 1;
            continue;
        }
        let mut j = i;
        while j < chars.len() && is_word_char(chars[j]) {
            j += 1;
        }
        let (mut s, mut e) = (i, j);
        while s < e && chars[s] == '-' {
            s += 1;
        }
        while e > s && chars[e - 1] == '-' {
            e -= 1;
        }
        if s < e {
            out.push((s, e, chars[s..e].iter().collect()));
        }
        i = j;
    }
    out
}

/// Lowercase, Unicode-aware, hyphen-preserving tokenization without stemming.
pub fn tokenize(text: &str) -> Vec<String> {
    token_spans(text).into_iter().map(|(_, _, t)| t).collect()
}

/// Runs of tokens separated by exactly one space in the source text. N-grams
/// drawn from a single segment occur verbatim (case-folded) in the text.
pub fn phrase_segments(text: &str) -> Vec<Vec<String>> {
    let chars: Vec<char> = text.chars().collect();
    let mut segments: Vec<Vec<String>> = Vec::new();
    let mut current: Vec<String> = Vec::new();
    let mut prev_end: Option<usize> = None;
    for (s, e, tok) in token_spans(text) {
        let joined = matches!(prev_end, Some(pe) if s == pe + 1 && chars[pe] == ' ');
        if !joined && !current.is_empty() {
            segments.push(std::mem::take(&mut current));
        }
        current.push(tok);
        prev_end = Some(e);
    }
    if !current.is_empty() {
        segments.push(current);
    }
    segments
}

/// Start offsets (in chars) of non-overlapping, word-bounded occurrences of
/// `needle` in `hay`. Both sides must already be case-folded.
fn find_phrase(hay: &[char], needle: &[char]) -> Vec<usize> {
    let mut hits = Vec::new();
    if needle.is_empty() || needle.len() > hay.len() {
        return hits;
    }
    let mut i = 0;
    while i + needle.len() <= hay.len() {
        if hay[i..i + needle.len()] == *needle {
            let before_ok = i == 0 || !is_word_char(hay[i - 1]) || !is_word_char(needle[0]);
            let end = i + needle.len();
            let after_ok =
                end == hay.len() || !is_word_char(hay[end]) || !is_word_char(needle[needle.len() - 1]);
            if before_ok && after_ok {
                hits.push(i);
                i = end;
                continue;
            }
        }
        i += 1;
    }
    hits
}

/// Counts word-bounded, case-insensitive occurrences of `phrase` in `text`.
pub fn phrase_frequency(text: &str, phrase: &str) -> usize {
    let hay: Vec<char> = text.chars().map(fold).collect();
    let needle: Vec<char> = collapse_ws(phrase).chars().map(fold).collect();
    find_phrase(&hay, &needle).len()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub doc_id: String,
    pub positions: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    documents: Vec<Document>,
    index: BTreeMap<String, Vec<Posting>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedRecord {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub records_read: usize,
    pub ingested: usize,
    pub skipped: Vec<SkippedRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snippet {
    pub doc_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextBundle {
    pub query: String,
    pub snippets: Vec<Snippet>,
    pub total_chars: usize,
    /// Set when no document held the exact phrase and token overlap ranked the snippets.
    pub fallback: bool,
}

impl ContextBundle {
    pub fn empty(query: &str) -> Self {
        ContextBundle { query: query.to_string(), snippets: Vec::new(), total_chars: 0, fallback: false }
    }

    pub fn is_empty(&self) -> bool {
        self.snippets.is_empty()
    }

    pub fn doc_ids(&self) -> Vec<String> {
        self.snippets.iter().map(|s| s.doc_id.clone()).collect()
    }

    /// Prompt text: snippets separated by blank lines.
    pub fn render(&self) -> String {
        self.snippets.iter().map(|s| s.text.as_str()).collect::<Vec<_>>().join("\n\n")
    }
}

/// Per-call retrieval limits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalBudget {
    pub max_docs: usize,
    pub max_chars: usize,
}

impl Default for RetrievalBudget {
    fn default() -> Self {
        RetrievalBudget { max_docs: 5, max_chars: DEFAULT_CONTEXT_CHARS }
    }
}

#[derive(Serialize, Deserialize)]
struct CorpusFile {
    format: String,
    version: u32,
    documents: Vec<Document>,
    index: BTreeMap<String, Vec<Posting>>,
}

fn build_index(documents: &[Document]) -> BTreeMap<String, Vec<Posting>> {
    let mut index: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
    for doc in documents {
        let tokens = tokenize(&doc.text());
        let mut local: BTreeMap<String, Vec<u32>> = BTreeMap::new();
        for n in 1..=MAX_INDEXED_NGRAM {
            for (pos, window) in tokens.windows(n).enumerate() {
                local.entry(window.join(" ")).or_default().push(pos as u32);
            }
        }
        for (term, positions) in local {
            index.entry(term).or_default().push(Posting { doc_id: doc.doc_id.clone(), positions });
        }
    }
    index
}

fn field_str<'a>(v: &'a Value, keys: &[&str]) -> Option<&'a str> {
    keys.iter().find_map(|k| v.get(*k).and_then(Value::as_str))
}

fn parse_jsonl_record(line: &str) -> Result<Document, String> {
    let v: Value = serde_json::from_str(line).map_err(|e| format!("invalid JSON: {e}"))?;
    let id = field_str(&v, &["id", "doc_id"]).ok_or("missing id")?;
    if id.trim().is_empty() {
        return Err("empty id".into());
    }
    let body = field_str(&v, &["abstract", "body"]).ok_or("missing abstract")?;
    let title = field_str(&v, &["title"]).unwrap_or("");
    let year = match v.get("year") {
        None | Some(Value::Null) => None,
        Some(y) => Some(
            y.as_i64()
                .and_then(|y| i32::try_from(y).ok())
                .ok_or_else(|| format!("invalid year {y}"))?,
        ),
    };
    Document::new(id, title, body, year).map_err(|e| e.to_string())
}

fn parse_tsv_record(line: &str) -> Result<Document, String> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() < 3 {
        return Err(format!("expected at least 3 fields, found {}", fields.len()));
    }
    if fields[0].trim().is_empty() {
        return Err("empty id".into());
    }
    let year = match fields.get(3).map(|s| s.trim()) {
        None | Some("") => None,
        Some(y) => Some(y.parse::<i32>().map_err(|_| format!("invalid year {y:?}"))?),
    };
    Document::new(fields[0], fields[1], fields[2], year).map_err(|e| e.to_string())
}

impl Corpus {
    /// Builds the index. Fails on duplicate ids.
    pub fn from_documents(documents: Vec<Document>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        for d in &documents {
            if !seen.insert(d.doc_id.as_str()) {
                return Err(CorpusError::DuplicateDocId(d.doc_id.clone()));
            }
        }
        let index = build_index(&documents);
        Ok(Corpus { documents, index })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn get(&self, doc_id: &str) -> Option<&Document> {
        self.documents.iter().find(|d| d.doc_id == doc_id)
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.index.get(term).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn index(&self) -> &BTreeMap<String, Vec<Posting>> {
        &self.index
    }

    pub fn to_json(&self) -> String {
        let file = CorpusFile {
            format: CORPUS_FORMAT.to_string(),
            version: CORPUS_FORMAT_VERSION,
            documents: self.documents.clone(),
            index: self.index.clone(),
        };
        serde_json::to_string(&file).expect("corpus serializes")
    }

    /// Loads a serialized corpus and verifies its index against the documents.
    pub fn from_json(text: &str) -> Result<Self, CorpusError> {
        let file: CorpusFile = serde_json::from_str(text)?;
        if file.format != CORPUS_FORMAT || file.version != CORPUS_FORMAT_VERSION {
            return Err(CorpusError::Version { found: format!("{} v{}", file.format, file.version) });
        }
        let corpus = Corpus::from_documents(file.documents)?;
        if corpus.index != file.index {
            return Err(CorpusError::IndexMismatch);
        }
        Ok(corpus)
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        fs::write(path, self.to_json())
            .map_err(|e| CorpusError::Io { path: path.display().to_string(), source: e })
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CorpusError::Io { path: path.display().to_string(), source: e })?;
        Corpus::from_json(&text)
    }

    /// Documents containing the exact phrase ranked by frequency then doc_id;
    /// token-overlap fallback when nothing matches exactly.
    pub fn retrieve_by_entity(&self, entity: &str, max_docs: usize, max_chars: usize) -> ContextBundle {
        let query = collapse_ws(entity);
        let mut bundle = ContextBundle::empty(&query);
        if query.is_empty() || max_docs == 0 {
            return bundle;
        }
        let needle: Vec<char> = query.chars().map(fold).collect();
        let query_tokens: BTreeSet<String> = tokenize(&query).into_iter().collect();

        // Documents holding every query token; the phrase check below is authoritative.
        let candidates: Vec<&Document> = if query_tokens.is_empty() {
            self.documents.iter().collect()
        } else {
            let mut docs: Option<BTreeSet<&str>> = None;
            for tok in &query_tokens {
                let ids: BTreeSet<&str> = self.postings(tok).iter().map(|p| p.doc_id.as_str()).collect();
                docs = Some(match docs {
                    None => ids,
                    Some(prev) => prev.intersection(&ids).copied().collect(),
                });
            }
            let docs = docs.unwrap_or_default();
            self.documents.iter().filter(|d| docs.contains(d.doc_id.as_str())).collect()
        };

        let mut exact: Vec<(usize, &Document, Vec<char>, usize)> = Vec::new();
        for doc in candidates {
            let text: Vec<char> = doc.text().chars().collect();
            let folded: Vec<char> = text.iter().copied().map(fold).collect();
            let hits = find_phrase(&folded, &needle);
            if let Some(&first) = hits.first() {
                exact.push((hits.len(), doc, text, first));
            }
        }

        let mut remaining = max_chars;
        if !exact.is_empty() {
            exact.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.doc_id.cmp(&b.1.doc_id)));
            for (_, doc, text, first) in exact.into_iter().take(max_docs) {
                if remaining < needle.len() {
                    break;
                }
                let window = if text.len() <= remaining {
                    text
                } else {
                    let slack = remaining - needle.len();
                    let start = first.saturating_sub(slack / 2).min(text.len() - remaining);
                    text[start..start + remaining].to_vec()
                };
                remaining -= window.len();
                bundle.snippets.push(Snippet { doc_id: doc.doc_id.clone(), text: window.into_iter().collect() });
            }
        } else if !query_tokens.is_empty() {
            let mut overlap: BTreeMap<&str, usize> = BTreeMap::new();
            for tok in &query_tokens {
                for p in self.postings(tok) {
                    *overlap.entry(p.doc_id.as_str()).or_default() += 1;
                }
            }
            let mut ranked: Vec<(&str, usize)> = overlap.into_iter().collect();
            ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
            for (doc_id, _) in ranked.into_iter().take(max_docs) {
                if remaining == 0 {
                    break;
                }
                let doc = self.get(doc_id).expect("indexed document exists");
                let text: String = doc.text().chars().take(remaining).collect();
                remaining -= text.chars().count();
                bundle.snippets.push(Snippet { doc_id: doc.doc_id.clone(), text });
            }
            bundle.fallback = !bundle.snippets.is_empty();
        }
        bundle.total_chars = max_chars - remaining;
        bundle
    }

    pub fn retrieve(&self, entity: &str, budget: RetrievalBudget) -> ContextBundle {
        self.retrieve_by_entity(entity, budget.max_docs, budget.max_chars)
    }
}

/// Reads a JSONL (`{id, title, abstract, year}`) or TSV (`id, title, abstract[, year]`) corpus.
/// Malformed records are skipped and reported; duplicate ids abort ingestion.
pub fn ingest_corpus(path: &Path, format: CorpusFormat) -> Result<(Corpus, IngestReport), CorpusError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CorpusError::Io { path: path.display().to_string(), source: e })?;
    ingest_str(&text, format)
}

pub fn ingest_str(text: &str, format: CorpusFormat) -> Result<(Corpus, IngestReport), CorpusError> {
    let mut report = IngestReport::default();
    let mut docs = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        if format == CorpusFormat::Tsv && idx == 0 && line.starts_with("id\t") {
            continue;
        }
        report.records_read += 1;
        let parsed = match format {
            CorpusFormat::Jsonl => parse_jsonl_record(line),
            CorpusFormat::Tsv => parse_tsv_record(line),
        };
        match parsed {
            Ok(doc) => docs.push(doc),
            Err(reason) => report.skipped.push(SkippedRecord { line: idx + 1, reason }),
        }
    }
    let corpus = Corpus::from_documents(docs)?;
    report.ingested = corpus.len();
    Ok((corpus, report))
}
