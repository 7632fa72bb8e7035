//! Candidate-triplet extraction: retrieve context per query entity, prompt the
//! model, parse the `(entity, relation, entity)` response.

use serde::{Deserialize, Serialize};

use crate::corpus::{ContextBundle, Corpus, RetrievalBudget};
use crate::graph::{GraphError, GraphRole, KnowledgeGraph, RelationType, Source, Triplet};
use crate::llm::{bindings, Bindings, LlmError, LlmGateway, TemplateId};
use crate::seeds::SeedList;

#[derive(Debug, thiserror::Error)]
pub enum ExtractError {
    #[error("seed list is empty")]
    NoSeeds,
    #[error("extraction for {entity:?} failed: {source}")]
    Llm {
        entity: String,
        #[source]
        source: LlmError,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedFragment {
    pub raw: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedTriplets {
    pub triplets: Vec<Triplet>,
    pub skipped: Vec<SkippedFragment>,
}

fn is_none_marker(s: &str) -> bool {
    let s = s.trim().trim_end_matches('.').trim_matches(|c| c == '"' || c == '\'' || c == '`');
    s.eq_ignore_ascii_case("none")
}

/// Drops leading list markers such as `1.`, `2)`, `-`, `*` and bullets.
fn strip_enumeration(s: &str) -> &str {
    let mut rest = s.trim_start();
    loop {
        let before = rest;
        rest = rest.trim_start_matches(['-', '*', '•', '·', '>', ',', ';']).trim_start();
        let digits = rest.len() - rest.trim_start_matches(|c: char| c.is_ascii_digit()).len();
        if digits > 0 {
            let after = &rest[digits..];
            if let Some(r) = after.strip_prefix('.').or_else(|| after.strip_prefix(')')).or_else(|| after.strip_prefix(':')) {
                rest = r.trim_start();
            }
        }
        if rest == before {
            return rest;
        }
    }
}

fn outside_noise(text: &str) -> Option<String> {
    let leftover: Vec<&str> = text
        .lines()
        .map(|l| strip_enumeration(l).trim())
        .filter(|l| !l.is_empty() && !is_none_marker(l))
        .collect();
    (!leftover.is_empty()).then(|| leftover.join(" "))
}

fn trim_field(s: &str) -> &str {
    s.trim().trim_matches(|c| c == '"' || c == '\'' || c == '`').trim()
}

fn parse_group(inner: &str) -> Result<Triplet, String> {
    let mut fields = Vec::new();
    let mut depth = 0usize;
    let mut start = 0;
    for (i, c) in inner.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth = depth.saturating_sub(1),
            ',' if depth == 0 => {
                fields.push(&inner[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    fields.push(&inner[start..]);
    if fields.len() != 3 {
        return Err(format!("expected 3 fields, found {}", fields.len()));
    }
    let rel_text = trim_field(fields[1]);
    let relation = RelationType::parse(rel_text).map_err(|_| format!("unknown relation {rel_text:?}"))?;
    Triplet::new(trim_field(fields[0]), relation, trim_field(fields[2]), Source::Extracted).map_err(|e| match e {
        GraphError::EmptySurface => "empty entity".to_string(),
        GraphError::SelfLoop(s) => format!("self-loop on {s:?}"),
        other => other.to_string(),
    })
}

/// Scans for top-level parenthesized groups. Parentheses nested inside a group are
/// kept as part of the entity, and commas inside them do not split fields. The
/// parse never fails: rejected groups and stray text are returned as skipped.
pub fn parse_triplets(text: &str) -> ParsedTriplets {
    let mut out = ParsedTriplets::default();
    if is_none_marker(text) {
        return out;
    }
    let mut depth = 0usize;
    let mut group_start = 0;
    let mut outside = String::new();
    for (i, c) in text.char_indices() {
        match c {
            '(' => {
                if depth == 0 {
                    group_start = i;
                }
                depth += 1;
            }
            ')' if depth > 0 => {
                depth -= 1;
                if depth == 0 {
                    let raw = &text[group_start..=i];
                    match parse_group(&raw[1..raw.len() - 1]) {
                        Ok(t) => out.triplets.push(t),
                        Err(reason) => out.skipped.push(SkippedFragment { raw: raw.to_string(), reason }),
                    }
                    outside.push('\n');
                }
            }
            _ if depth == 0 => outside.push(c),
            _ => {}
        }
    }
    if depth > 0 {
        out.skipped.push(SkippedFragment {
            raw: text[group_start..].to_string(),
            reason: "unbalanced parentheses".into(),
        });
    }
    if let Some(noise) = outside_noise(&outside) {
        out.skipped.push(SkippedFragment { raw: noise, reason: "text outside any triplet".into() });
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionConfig {
    pub budget: RetrievalBudget,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionReport {
    pub query: String,
    pub triplets: Vec<Triplet>,
    pub skipped: Vec<SkippedFragment>,
    pub exchange_ref: String,
    pub context_doc_ids: Vec<String>,
    pub context_fallback: bool,
}

/// Prompt bindings for extracting around `q`, with the retrieved context.
pub fn extraction_bindings(q: &str, corpus: &Corpus, config: &ExtractionConfig) -> (Bindings, ContextBundle) {
    let context = corpus.retrieve(q, config.budget);
    (bindings([("context", &context.render()), ("query", q)]), context)
}

pub fn extract_for_entity(
    q: &str,
    corpus: &Corpus,
    llm: &LlmGateway,
    config: &ExtractionConfig,
) -> Result<ExtractionReport, ExtractError> {
    let (b, context) = extraction_bindings(q, corpus, config);
    let exchange = llm
        .complete(TemplateId::Extraction, b)
        .map_err(|source| ExtractError::Llm { entity: q.to_string(), source })?;
    let parsed = parse_triplets(&exchange.raw_response);
    let doc_ids = context.doc_ids();
    let triplets = parsed.triplets.into_iter().map(|t| t.with_evidence(doc_ids.clone())).collect();
    Ok(ExtractionReport {
        query: q.to_string(),
        triplets,
        skipped: parsed.skipped,
        exchange_ref: exchange.id,
        context_doc_ids: doc_ids,
        context_fallback: context.fallback,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityFailure {
    pub entity: String,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct CandidateBuild {
    pub graph: KnowledgeGraph,
    pub reports: Vec<ExtractionReport>,
    pub failures: Vec<EntityFailure>,
}

/// Runs extraction for every seed (concurrently when the gateway allows) and
/// merges reports in seed order. Failed entities are recorded, not fatal.
pub fn build_candidate_graph(
    seeds: &SeedList,
    corpus: &Corpus,
    llm: &LlmGateway,
    config: &ExtractionConfig,
) -> Result<CandidateBuild, ExtractError> {
    if seeds.is_empty() {
        return Err(ExtractError::NoSeeds);
    }
    let results = llm.map_bounded(&seeds.entities, |q| extract_for_entity(q, corpus, llm, config));
    let mut graph = KnowledgeGraph::new(GraphRole::Candidate);
    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for (q, result) in seeds.entities.iter().zip(results) {
        match result {
            Ok(report) => {
                for t in &report.triplets {
                    graph.insert(t.clone()).expect("parsed triplets are loop-free");
                }
                reports.push(report);
            }
            Err(e) => {
                log::warn!("{e}");
                failures.push(EntityFailure { entity: q.clone(), error: e.to_string() });
            }
        }
    }
    Ok(CandidateBuild { graph, reports, failures })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;
    use crate::llm::MockBackend;
    use RelationType::*;

    fn t(h: &str, r: RelationType, tl: &str) -> Triplet {
        Triplet::new(h, r, tl, Source::Extracted).unwrap()
    }

    #[test]
    fn single_triplet() {
        let p = parse_triplets("(word embedding, Used-for, sentiment analysis)");
        assert_eq!(p.triplets, vec![t("word embedding", UsedFor, "sentiment analysis")]);
        assert!(p.skipped.is_empty());
    }

    #[test]
    fn none_is_empty() {
        for s in ["None", " none. ", "\"None\""] {
            assert_eq!(parse_triplets(s), ParsedTriplets::default());
        }
    }

    #[test]
    fn unknown_relation_skipped() {
        let p = parse_triplets("(A, Evaluated-by, B)(C, Compare, D)");
        assert_eq!(p.triplets, vec![t("c", Compare, "d")]);
        assert_eq!(p.skipped.len(), 1);
        assert_eq!(p.skipped[0].raw, "(A, Evaluated-by, B)");
        assert!(p.skipped[0].reason.contains("Evaluated-by"));
    }

    #[test]
    fn case_study_triplet() {
        let p = parse_triplets("(hierarchical attention network, Used-for, reading comprehension)");
        assert_eq!(p.triplets, vec![t("hierarchical attention network", UsedFor, "reading comprehension")]);
    }

    #[test]
    fn nested_parens_and_inner_commas() {
        let p = parse_triplets("(long short-term memory (lstm, rnn), Hyponym-Of, recurrent neural network)");
        assert_eq!(p.triplets, vec![t("long short-term memory (lstm, rnn)", HyponymOf, "recurrent neural network")]);
    }

    #[test]
    fn enumeration_and_storage_spelling() {
        let text = "1. (BERT, Used_for, question answering)\n2) (GPT, Compare, BERT)\n- (x, Part-of, y)";
        let p = parse_triplets(text);
        assert_eq!(p.triplets.len(), 3);
        assert!(p.skipped.is_empty(), "{:?}", p.skipped);
    }

    #[test]
    fn diagnostics() {
        let p = parse_triplets("Here you go: (a, Used-for) (b, Compare, b) (c, Used-for, d");
        let reasons: Vec<&str> = p.skipped.iter().map(|s| s.reason.as_str()).collect();
        assert!(reasons.contains(&"expected 3 fields, found 2"));
        assert!(reasons.iter().any(|r| r.starts_with("self-loop")));
        assert!(reasons.contains(&"unbalanced parentheses"));
        assert!(reasons.contains(&"text outside any triplet"));
        assert!(p.triplets.is_empty());
    }

    #[test]
    fn empty_field_skipped() {
        let p = parse_triplets("( , Used-for, x)");
        assert_eq!(p.skipped[0].reason, "empty entity");
    }

    fn small_corpus() -> Corpus {
        Corpus::from_documents(vec![
            Document::new("d1", "Parsing", "Semantic parsing maps text to logical forms.", None).unwrap(),
            Document::new("d2", "Few-shot", "Few-shot learning adapts with few labels.", None).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn report_from_fixture() {
        let corpus = small_corpus();
        let cfg = ExtractionConfig::default();
        let ctx = corpus.retrieve("semantic parsing", cfg.budget);
        let mut mock = MockBackend::new();
        mock.insert(
            TemplateId::Extraction,
            &bindings([("context", &ctx.render()), ("query", "semantic parsing")]),
            "(semantic parsing, Used-for, question answering)(logical form, Part-of, semantic parsing)(lambda calculus, Used-for, logical form)",
        );
        let llm = LlmGateway::new(Box::new(mock.strict(true)));
        let r = extract_for_entity("semantic parsing", &corpus, &llm, &cfg).unwrap();
        assert_eq!(r.triplets.len(), 3);
        assert!(!r.exchange_ref.is_empty());
        assert_eq!(r.triplets[0].evidence, vec!["d1".to_string()]);
        // third triplet does not mention the query entity and is still kept
        assert!(!r.triplets[2].touches("semantic parsing"));
    }

    #[test]
    fn empty_context_gives_empty_report() {
        let corpus = small_corpus();
        let llm = LlmGateway::new(Box::new(MockBackend::new()));
        let r = extract_for_entity("zzzz qqqq", &corpus, &llm, &ExtractionConfig::default()).unwrap();
        assert!(r.triplets.is_empty());
        assert!(llm.audit().entries()[0].rendered_prompt.contains("### Content:\n\n"));
    }

    #[test]
    fn candidate_graph_dedups_and_records_failures() {
        let corpus = small_corpus();
        let cfg = ExtractionConfig::default();
        let mut mock = MockBackend::new();
        for q in ["semantic parsing", "few-shot learning"] {
            let ctx = corpus.retrieve(q, cfg.budget);
            mock.insert(
                TemplateId::Extraction,
                &bindings([("context", &ctx.render()), ("query", q)]),
                &format!("(semantic parsing, Compare, few-shot learning)({q}, Used-for, nlp)"),
            );
        }
        let llm = LlmGateway::new(Box::new(mock.strict(true))).with_parallelism(2);
        let seeds = SeedList::from_entities(["semantic parsing".to_string(), "few-shot learning".into(), "unknown".into()]);
        let build = build_candidate_graph(&seeds, &corpus, &llm, &cfg).unwrap();
        assert_eq!(build.graph.len(), 3);
        assert_eq!(build.failures.len(), 1);
        assert_eq!(build.failures[0].entity, "unknown");
        let shared = build.graph.triplets().find(|t| t.relation == Compare).unwrap();
        assert_eq!(shared.evidence, vec!["d1".to_string(), "d2".into()]);
        assert_eq!(llm.audit().len(), 3);
    }
}
