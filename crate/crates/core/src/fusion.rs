//! Per-entity graph fusion through the model, then a deterministic global pass:
//! alias closure, pair-level consolidation and conflict fallback.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, RetrievalBudget};
use crate::extract::{parse_triplets, EntityFailure, SkippedFragment};
use crate::graph::{
    prefer_surface, render_prompt_triplets, AliasMap, ConflictSet, GraphError, GraphRole, KnowledgeGraph, PairKey,
    RelationType, Source, Triplet, UnorderedPair,
};
use crate::llm::{bindings, Bindings, LlmError, LlmGateway, TemplateId};

#[derive(Debug, thiserror::Error)]
pub enum FusionError {
    #[error("candidate graph is empty")]
    EmptyCandidate,
    #[error("conflict fallback needs at least 2 triplets, got {0}")]
    NotAConflict(usize),
    #[error("invalid fusion policy: {0}")]
    InvalidPolicy(String),
    #[error("fusion for {entity:?} failed: {source}")]
    Llm {
        entity: String,
        #[source]
        source: LlmError,
    },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConflictFallback {
    RelationPriority,
    Drop,
    KeepFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AliasCanonicalRule {
    LongerSurface,
    ExpertPreferred,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionPolicy {
    pub conflict_fallback: ConflictFallback,
    /// Highest priority first.
    pub relation_priority: Vec<RelationType>,
    pub alias_canonical_rule: AliasCanonicalRule,
    /// Expert-graph triplets win conflicts left after model fusion.
    pub expert_wins: bool,
}

impl Default for FusionPolicy {
    fn default() -> Self {
        use RelationType::*;
        FusionPolicy {
            conflict_fallback: ConflictFallback::RelationPriority,
            relation_priority: vec![PrerequisiteOf, UsedFor, HyponymOf, PartOf, EvaluateFor, Compare, Conjunction],
            alias_canonical_rule: AliasCanonicalRule::LongerSurface,
            expert_wins: true,
        }
    }
}

impl FusionPolicy {
    pub fn validate(&self) -> Result<(), FusionError> {
        let set: BTreeSet<RelationType> = self.relation_priority.iter().copied().collect();
        if self.relation_priority.len() != RelationType::ALL.len() || set.len() != RelationType::ALL.len() {
            return Err(FusionError::InvalidPolicy(
                "relation_priority must list each of the 7 relation types exactly once".into(),
            ));
        }
        Ok(())
    }

    fn rank(&self, r: RelationType) -> usize {
        self.relation_priority.iter().position(|x| *x == r).unwrap_or(usize::MAX)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AliasMerge {
    pub surface_a: String,
    pub surface_b: String,
    pub kept: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionResult {
    pub query: String,
    pub input_triplets: Vec<Triplet>,
    pub fused_triplets: Vec<Triplet>,
    pub alias_merges: Vec<AliasMerge>,
    pub skipped: Vec<SkippedFragment>,
    /// Empty when both input subgraphs were empty and no call was made.
    pub exchange_ref: String,
    pub background_doc_ids: Vec<String>,
    pub degraded: bool,
}

fn words(s: &str) -> Vec<&str> {
    s.split(|c: char| c.is_whitespace() || c == '-').filter(|w| !w.is_empty()).collect()
}

fn acronym_hits(short: &[&str], long: &[&str]) -> usize {
    short
        .iter()
        .filter(|t| t.chars().count() >= 2)
        .filter(|t| {
            let n = t.chars().count();
            long.windows(n).any(|w| w.iter().filter_map(|x| x.chars().next()).eq(t.chars()))
        })
        .count()
}

/// Shared words plus acronym matches ("mt" against "machine translation").
fn surface_affinity(a: &str, b: &str) -> usize {
    let (wa, wb) = (words(a), words(b));
    let sa: BTreeSet<&str> = wa.iter().copied().collect();
    let shared = wb.iter().copied().collect::<BTreeSet<_>>().intersection(&sa).count();
    shared + acronym_hits(&wa, &wb) + acronym_hits(&wb, &wa)
}

/// An input entity missing from the output is merged into `z` when every input
/// edge it had to a surviving partner reappears in the output with the same
/// relation and direction on `z`, and `z` is the unique such surface with the
/// highest (non-zero) surface affinity.
fn infer_alias_merges(inputs: &[Triplet], outputs: &[Triplet]) -> Vec<AliasMerge> {
    let input_entities: BTreeSet<&str> = inputs.iter().flat_map(|t| [t.head.as_str(), t.tail.as_str()]).collect();
    let output_entities: BTreeSet<&str> = outputs.iter().flat_map(|t| [t.head.as_str(), t.tail.as_str()]).collect();
    let mut merges = Vec::new();
    for &x in input_entities.difference(&output_entities) {
        let mut candidates: Option<BTreeSet<&str>> = None;
        for t in inputs.iter().filter(|t| t.touches(x)) {
            let (partner, x_is_head) = if t.head == x { (t.tail.as_str(), true) } else { (t.head.as_str(), false) };
            if !output_entities.contains(partner) {
                continue;
            }
            let here: BTreeSet<&str> = outputs
                .iter()
                .filter(|o| o.relation == t.relation)
                .filter_map(|o| {
                    if x_is_head && o.tail == partner {
                        Some(o.head.as_str())
                    } else if !x_is_head && o.head == partner {
                        Some(o.tail.as_str())
                    } else if t.relation.is_symmetric() && o.touches(partner) {
                        Some(if o.head == partner { o.tail.as_str() } else { o.head.as_str() })
                    } else {
                        None
                    }
                })
                .filter(|z| *z != x && *z != partner)
                .collect();
            candidates = Some(match candidates {
                None => here,
                Some(prev) => prev.intersection(&here).copied().collect(),
            });
        }
        let Some(candidates) = candidates else { continue };
        let scored: Vec<(usize, &str)> =
            candidates.iter().map(|z| (surface_affinity(x, z), *z)).filter(|(s, _)| *s > 0).collect();
        let Some(best) = scored.iter().map(|(s, _)| *s).max() else { continue };
        let top: Vec<&str> = scored.iter().filter(|(s, _)| *s == best).map(|(_, z)| *z).collect();
        if let [z] = top[..] {
            merges.push(AliasMerge { surface_a: x.to_string(), surface_b: z.to_string(), kept: z.to_string() });
        }
    }
    merges
}

/// Prompt bindings for fusing around `q`, or `None` when both subgraphs are empty.
pub fn fusion_bindings(
    q: &str,
    candidate: &KnowledgeGraph,
    expert: Option<&KnowledgeGraph>,
    corpus: &Corpus,
    budget: RetrievalBudget,
) -> Option<Bindings> {
    let g1 = candidate.subgraph(q).triplets;
    let g2 = expert.map(|e| e.subgraph(q).triplets).unwrap_or_default();
    if g1.is_empty() && g2.is_empty() {
        return None;
    }
    Some(bindings([
        ("entity", q),
        ("LLM-KG", &render_prompt_triplets(&g1)),
        ("E-G", &render_prompt_triplets(&g2)),
        ("background", &corpus.retrieve(q, budget).render()),
    ]))
}

/// Fuses the candidate and (optional) expert subgraphs around `q` with one model call.
pub fn fuse_entity(
    q: &str,
    candidate: &KnowledgeGraph,
    expert: Option<&KnowledgeGraph>,
    corpus: &Corpus,
    llm: &LlmGateway,
    budget: RetrievalBudget,
) -> Result<FusionResult, FusionError> {
    let g1 = candidate.subgraph(q).triplets;
    let g2 = expert.map(|e| e.subgraph(q).triplets).unwrap_or_default();
    let mut result = FusionResult {
        query: q.to_string(),
        input_triplets: g1.into_iter().chain(g2).collect(),
        fused_triplets: Vec::new(),
        alias_merges: Vec::new(),
        skipped: Vec::new(),
        exchange_ref: String::new(),
        background_doc_ids: Vec::new(),
        degraded: false,
    };
    let Some(b) = fusion_bindings(q, candidate, expert, corpus, budget) else {
        return Ok(result);
    };
    let background = corpus.retrieve(q, budget);
    let exchange = llm
        .complete(TemplateId::Fusion, b)
        .map_err(|source| FusionError::Llm { entity: q.to_string(), source })?;
    let parsed = parse_triplets(&exchange.raw_response);
    result.exchange_ref = exchange.id;
    result.background_doc_ids = background.doc_ids();
    result.skipped = parsed.skipped;
    if parsed.triplets.is_empty() {
        result.degraded = true;
        return Ok(result);
    }
    let mut seen = BTreeSet::new();
    result.fused_triplets = parsed
        .triplets
        .into_iter()
        .map(|mut t| {
            t.source = Source::Fused;
            t
        })
        .filter(|t| seen.insert(t.key()))
        .collect();
    result.alias_merges = infer_alias_merges(&result.input_triplets, &result.fused_triplets);
    Ok(result)
}

/// Union-find closure over recorded merges. Each class is represented by the
/// surface most often kept; ties go to the longer surface, then the
/// lexicographically smaller one.
pub fn merge_aliases(merges: &[AliasMerge]) -> AliasMap {
    let mut map = AliasMap::new();
    let mut votes: BTreeMap<&str, usize> = BTreeMap::new();
    for m in merges {
        map.union(&m.surface_a, &m.surface_b);
        *votes.entry(m.kept.as_str()).or_default() += 1;
    }
    for class in map.classes() {
        let best = class
            .members
            .iter()
            .map(|s| (votes.get(s.as_str()).copied().unwrap_or(0), s.as_str()))
            .reduce(|a, b| match a.0.cmp(&b.0) {
                std::cmp::Ordering::Greater => a,
                std::cmp::Ordering::Less => b,
                std::cmp::Ordering::Equal => {
                    if prefer_surface(a.1, b.1) == a.1 {
                        a
                    } else {
                        b
                    }
                }
            })
            .map(|(_, s)| s.to_string());
        if let Some(best) = best {
            map.set_canonical(&best);
        }
    }
    map
}

/// Deterministic resolution of a conflict the model left open. `None` means the
/// pair is dropped.
pub fn resolve_conflict_fallback(conflict: &ConflictSet, policy: &FusionPolicy) -> Result<Option<Triplet>, FusionError> {
    if conflict.triplets.len() < 2 {
        return Err(FusionError::NotAConflict(conflict.triplets.len()));
    }
    Ok(match policy.conflict_fallback {
        ConflictFallback::Drop => None,
        ConflictFallback::KeepFirst => conflict.triplets.first().cloned(),
        ConflictFallback::RelationPriority => {
            conflict.triplets.iter().min_by_key(|t| (policy.rank(t.relation), t.key())).cloned()
        }
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictResolution {
    pub pair: UnorderedPair,
    pub candidates: Vec<Triplet>,
    pub kept: Option<Triplet>,
    pub rule: String,
}

#[derive(Debug, Clone)]
pub struct FusionOutcome {
    pub graph: KnowledgeGraph,
    pub results: Vec<FusionResult>,
    pub failures: Vec<EntityFailure>,
    pub resolutions: Vec<ConflictResolution>,
}

fn rewrite(t: &Triplet, aliases: &AliasMap) -> Option<Triplet> {
    let mut t = t.clone();
    t.head = aliases.canonical(&t.head).to_string();
    t.tail = aliases.canonical(&t.tail).to_string();
    if t.head == t.tail {
        return None;
    }
    if t.relation.is_symmetric() && t.tail < t.head {
        std::mem::swap(&mut t.head, &mut t.tail);
    }
    Some(t)
}

fn rewritten_keys(g: Option<&KnowledgeGraph>, aliases: &AliasMap) -> BTreeMap<PairKey, Triplet> {
    g.into_iter()
        .flat_map(|g| g.triplets())
        .filter_map(|t| rewrite(t, aliases))
        .map(|t| (t.key(), t))
        .collect()
}

fn push_unique(v: &mut Vec<Triplet>, t: Triplet) {
    if !v.iter().any(|x| x.key() == t.key()) {
        v.push(t);
    }
}

/// Fuses every seed and candidate entity (sorted), then consolidates globally.
/// For each entity pair the decision comes from the last fusion result that
/// emitted it; a pair some result saw but no result emitted is dropped; pairs
/// no successful result saw are carried over. Conflicts that remain go to the
/// expert graph (when `expert_wins`) and then to the fallback policy.
pub fn fuse_all(
    candidate: &KnowledgeGraph,
    expert: Option<&KnowledgeGraph>,
    seeds: &[String],
    corpus: &Corpus,
    llm: &LlmGateway,
    policy: &FusionPolicy,
    budget: RetrievalBudget,
) -> Result<FusionOutcome, FusionError> {
    policy.validate()?;
    if candidate.is_empty() {
        return Err(FusionError::EmptyCandidate);
    }
    let entities: Vec<String> = seeds
        .iter()
        .map(|s| candidate.canonical(s).to_string())
        .chain(candidate.entities())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let outputs = llm.map_bounded(&entities, |q| fuse_entity(q, candidate, expert, corpus, llm, budget));

    let mut results = Vec::new();
    let mut failures = Vec::new();
    for (q, r) in entities.iter().zip(outputs) {
        match r {
            Ok(r) => {
                if r.degraded {
                    log::warn!("fusion output for {q:?} had no usable triplets");
                }
                results.push(r);
            }
            Err(e) => {
                log::warn!("{e}");
                failures.push(EntityFailure { entity: q.clone(), error: e.to_string() });
            }
        }
    }

    let merges: Vec<AliasMerge> = results.iter().flat_map(|r| r.alias_merges.iter().cloned()).collect();
    let mut aliases = merge_aliases(&merges);
    if let (AliasCanonicalRule::ExpertPreferred, Some(e)) = (policy.alias_canonical_rule, expert) {
        let expert_entities = e.entities();
        for class in aliases.classes() {
            let preferred = class
                .members
                .iter()
                .filter(|m| expert_entities.contains(*m))
                .map(String::as_str)
                .reduce(|a, b| prefer_surface(a, b));
            if let Some(p) = preferred.map(str::to_string) {
                aliases.set_canonical(&p);
            }
        }
    }

    let candidate_keys = rewritten_keys(Some(candidate), &aliases);
    let expert_keys = rewritten_keys(expert, &aliases);

    let mut decided: BTreeMap<UnorderedPair, Vec<Triplet>> = BTreeMap::new();
    let mut seen: BTreeSet<UnorderedPair> = BTreeSet::new();
    for r in results.iter().filter(|r| !r.degraded) {
        let mut emitted: BTreeMap<UnorderedPair, Vec<Triplet>> = BTreeMap::new();
        for t in r.fused_triplets.iter().filter_map(|t| rewrite(t, &aliases)) {
            let mut t = t;
            match (expert_keys.get(&t.key()), candidate_keys.get(&t.key())) {
                (Some(_), _) => t.source = Source::Expert,
                (None, Some(c)) => {
                    t.source = Source::Fused;
                    t.evidence = c.evidence.clone();
                }
                (None, None) => {
                    t.source = Source::Novel;
                    t.evidence = r.background_doc_ids.clone();
                }
            }
            push_unique(emitted.entry(t.pair()).or_default(), t);
        }
        for t in r.input_triplets.iter().filter_map(|t| rewrite(t, &aliases)) {
            seen.insert(t.pair());
        }
        decided.extend(emitted);
    }

    let mut pairs: BTreeMap<UnorderedPair, Vec<Triplet>> = decided;
    let decided_pairs: BTreeSet<UnorderedPair> = pairs.keys().cloned().collect();
    for (key, t) in candidate_keys.iter().chain(&expert_keys) {
        let pair = t.pair();
        if seen.contains(&pair) || decided_pairs.contains(&pair) {
            continue;
        }
        let mut t = t.clone();
        t.source = if expert_keys.contains_key(key) { Source::Expert } else { Source::Extracted };
        push_unique(pairs.entry(pair).or_default(), t);
    }

    let mut graph = KnowledgeGraph::new(GraphRole::Fused);
    let _ = graph.set_aliases(aliases);
    let mut resolutions = Vec::new();
    for (pair, mut ts) in pairs {
        if ts.len() > 1 && policy.expert_wins {
            let from_expert: Vec<Triplet> = ts.iter().filter(|t| expert_keys.contains_key(&t.key())).cloned().collect();
            if !from_expert.is_empty() && from_expert.len() < ts.len() {
                resolutions.push(ConflictResolution {
                    pair: pair.clone(),
                    candidates: ts.clone(),
                    kept: (from_expert.len() == 1).then(|| from_expert[0].clone()),
                    rule: "expert_wins".into(),
                });
                ts = from_expert;
            }
        }
        let kept = if ts.len() > 1 {
            let conflict = ConflictSet { pair: pair.clone(), triplets: ts };
            let kept = resolve_conflict_fallback(&conflict, policy)?;
            resolutions.push(ConflictResolution {
                pair,
                candidates: conflict.triplets,
                kept: kept.clone(),
                rule: serde_json::to_value(policy.conflict_fallback)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_string))
                    .unwrap_or_default(),
            });
            kept
        } else {
            ts.pop()
        };
        if let Some(t) = kept {
            graph.insert(t)?;
        }
    }
    graph.check_invariants()?;
    Ok(FusionOutcome { graph, results, failures, resolutions })
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

    fn graph(role: GraphRole, ts: &[Triplet]) -> KnowledgeGraph {
        let mut kg = KnowledgeGraph::new(role);
        for x in ts {
            kg.insert(x.clone()).unwrap();
        }
        kg
    }

    fn corpus() -> Corpus {
        Corpus::from_documents(vec![
            Document::new("d1", "ROUGE", "ROUGE is a metric used to evaluate question answering model outputs.", None)
                .unwrap(),
            Document::new("d2", "NMT", "Attention mechanism improves neural machine translation.", None).unwrap(),
        ])
        .unwrap()
    }

    fn scripted(entries: &[(&str, &KnowledgeGraph, Option<&KnowledgeGraph>, &str)], corpus: &Corpus) -> LlmGateway {
        let mut mock = MockBackend::new();
        for (q, cand, exp, resp) in entries {
            let b = fusion_bindings(q, cand, *exp, corpus, RetrievalBudget::default()).unwrap();
            mock.insert(TemplateId::Fusion, &b, resp);
        }
        LlmGateway::new(Box::new(mock)).deterministic(true)
    }

    #[test]
    fn neural_mt_merge_inferred() {
        let c = corpus();
        let cand = graph(
            GraphRole::Candidate,
            &[
                t("attention mechanism", UsedFor, "neural machine translation"),
                t("attention mechanism", UsedFor, "neural mt"),
            ],
        );
        let llm = scripted(
            &[("attention mechanism", &cand, None, "(attention mechanism, Used-for, neural machine translation)")],
            &c,
        );
        let r = fuse_entity("attention mechanism", &cand, None, &c, &llm, RetrievalBudget::default()).unwrap();
        assert_eq!(
            r.alias_merges,
            vec![AliasMerge {
                surface_a: "neural mt".into(),
                surface_b: "neural machine translation".into(),
                kept: "neural machine translation".into(),
            }]
        );
        assert_eq!(r.fused_triplets.len(), 1);
    }

    #[test]
    fn unrelated_dropped_entity_is_not_merged() {
        let inputs = [t("bert", UsedFor, "question answering"), t("roberta", UsedFor, "question answering")];
        let outputs = [t("roberta", UsedFor, "question answering")];
        assert!(infer_alias_merges(&inputs, &outputs).is_empty());
    }

    #[test]
    fn lstm_acronym_affinity() {
        assert!(surface_affinity("lstm", "long short-term memory") > 0);
        assert_eq!(surface_affinity("bert", "roberta"), 0);
    }

    #[test]
    fn rouge_conflict_resolved_by_model() {
        let c = corpus();
        let cand = graph(
            GraphRole::Candidate,
            &[t("rouge", EvaluateFor, "question answering model"), t("rouge", UsedFor, "question answering model")],
        );
        assert_eq!(cand.detect_conflicts().len(), 1);
        let llm = scripted(&[("rouge", &cand, None, "(ROUGE, Evaluate-for, question answering model)")], &c);
        let r = fuse_entity("rouge", &cand, None, &c, &llm, RetrievalBudget::default()).unwrap();
        assert_eq!(r.fused_triplets.len(), 1);
        assert_eq!(r.fused_triplets[0].relation, EvaluateFor);
        assert!(r.alias_merges.is_empty());
    }

    #[test]
    fn empty_inputs_make_no_call() {
        let c = corpus();
        let cand = graph(GraphRole::Candidate, &[t("a", UsedFor, "b")]);
        let llm = LlmGateway::new(Box::new(MockBackend::new().strict(true)));
        let r = fuse_entity("zzz", &cand, None, &c, &llm, RetrievalBudget::default()).unwrap();
        assert!(r.fused_triplets.is_empty() && r.alias_merges.is_empty());
        assert!(llm.audit().is_empty());
    }

    #[test]
    fn fallback_modes() {
        let policy = FusionPolicy::default();
        let conflict =
            ConflictSet { pair: UnorderedPair::new("a", "b"), triplets: vec![t("a", HyponymOf, "b"), t("a", UsedFor, "b")] };
        assert_eq!(resolve_conflict_fallback(&conflict, &policy).unwrap().unwrap().relation, UsedFor);
        let drop = FusionPolicy { conflict_fallback: ConflictFallback::Drop, ..policy.clone() };
        assert_eq!(resolve_conflict_fallback(&conflict, &drop).unwrap(), None);
        let first = FusionPolicy { conflict_fallback: ConflictFallback::KeepFirst, ..policy.clone() };
        assert_eq!(resolve_conflict_fallback(&conflict, &first).unwrap().unwrap().relation, HyponymOf);
        let single = ConflictSet { pair: UnorderedPair::new("a", "b"), triplets: vec![t("a", UsedFor, "b")] };
        assert!(matches!(resolve_conflict_fallback(&single, &policy), Err(FusionError::NotAConflict(1))));
        // same relation, opposite directions: canonical pair order decides
        let dir =
            ConflictSet { pair: UnorderedPair::new("a", "b"), triplets: vec![t("b", UsedFor, "a"), t("a", UsedFor, "b")] };
        assert_eq!(resolve_conflict_fallback(&dir, &policy).unwrap().unwrap().head, "a");
    }

    #[test]
    fn policy_must_be_permutation() {
        let bad = FusionPolicy { relation_priority: vec![UsedFor; 7], ..Default::default() };
        assert!(bad.validate().is_err());
        assert!(FusionPolicy::default().validate().is_ok());
    }

    fn m(a: &str, b: &str, kept: &str) -> AliasMerge {
        AliasMerge { surface_a: a.into(), surface_b: b.into(), kept: kept.into() }
    }

    #[test]
    fn merge_alias_examples() {
        let map = merge_aliases(&[m("lstm", "long short-term memory", "long short-term memory")]);
        assert_eq!(map.canonical("lstm"), "long short-term memory");
        let map = merge_aliases(&[m("a", "b", "a"), m("b", "c", "b")]);
        assert!(map.same_class("a", "c"));
        assert_eq!(map.classes().len(), 1);
    }

    #[test]
    fn merge_alias_votes_match_brute_force() {
        let merges = [m("nmt", "neural mt", "nmt"), m("nmt", "neural machine translation", "nmt"), m("neural mt", "x", "x")];
        let map = merge_aliases(&merges);
        // oracle: count kept votes per surface directly, break ties by length then lexicographic order
        let members = ["nmt", "neural mt", "neural machine translation", "x"];
        let votes = |s: &str| merges.iter().filter(|mm| mm.kept == s).count();
        let mut best = members[0];
        for s in members {
            let better = (votes(s), s.len()) > (votes(best), best.len())
                || ((votes(s), s.len()) == (votes(best), best.len()) && s < best);
            if better {
                best = s;
            }
        }
        assert_eq!(best, "nmt");
        for s in members {
            assert_eq!(map.canonical(s), best);
        }
    }

    #[test]
    fn fuse_all_resolves_conflict_and_labels_novel() {
        let c = corpus();
        let cand = graph(
            GraphRole::Candidate,
            &[t("rouge", EvaluateFor, "question answering model"), t("rouge", UsedFor, "question answering model")],
        );
        let llm = scripted(
            &[(
                "rouge",
                &cand,
                None,
                "(rouge, Evaluate-for, question answering model)(rouge, Hyponym-Of, evaluation metric)",
            )],
            &c,
        );
        let out = fuse_all(&cand, None, &["rouge".into()], &c, &llm, &FusionPolicy::default(), RetrievalBudget::default())
            .unwrap();
        let g = &out.graph;
        assert_eq!(g.between("rouge", "question answering model").len(), 1);
        assert_eq!(g.between("rouge", "question answering model")[0].relation, EvaluateFor);
        let novel = g.between("rouge", "evaluation metric");
        assert_eq!(novel[0].source, Source::Novel);
        assert!(g.detect_conflicts().is_empty());
    }

    #[test]
    fn fuse_all_fallback_when_model_echoes_conflict() {
        let c = corpus();
        let cand = graph(GraphRole::Candidate, &[t("a", HyponymOf, "b"), t("a", UsedFor, "b"), t("c", Compare, "d")]);
        // non-strict mock echoes its inputs, leaving the conflict in place
        let llm = LlmGateway::new(Box::new(MockBackend::new())).deterministic(true);
        let out = fuse_all(&cand, None, &[], &c, &llm, &FusionPolicy::default(), RetrievalBudget::default()).unwrap();
        assert_eq!(out.graph.len(), 2);
        assert_eq!(out.graph.between("a", "b")[0].relation, UsedFor);
        assert_eq!(out.resolutions.len(), 1);
        out.graph.check_invariants().unwrap();
    }

    #[test]
    fn fuse_all_applies_aliases_globally() {
        let c = corpus();
        let cand = graph(
            GraphRole::Candidate,
            &[
                t("attention mechanism", UsedFor, "neural machine translation"),
                t("attention mechanism", UsedFor, "neural mt"),
                t("neural mt", Compare, "statistical machine translation"),
            ],
        );
        let llm = scripted(
            &[(
                "attention mechanism",
                &cand,
                None,
                "(attention mechanism, Used-for, neural machine translation)",
            )],
            &c,
        );
        let out = fuse_all(&cand, None, &[], &c, &llm, &FusionPolicy::default(), RetrievalBudget::default()).unwrap();
        let g = &out.graph;
        assert_eq!(g.canonical("neural mt"), "neural machine translation");
        assert!(g.entities().contains("neural machine translation"));
        assert!(!g.entities().contains("neural mt"));
        assert_eq!(g.between("neural machine translation", "statistical machine translation").len(), 1);
    }

    #[test]
    fn expert_wins_residual_conflict() {
        let c = corpus();
        let cand = graph(GraphRole::Candidate, &[t("a", UsedFor, "b")]);
        let exp = graph(GraphRole::Expert, &[t("a", PrerequisiteOf, "b")]);
        let llm = LlmGateway::new(Box::new(MockBackend::new())).deterministic(true);
        let policy = FusionPolicy {
            relation_priority: vec![UsedFor, PrerequisiteOf, HyponymOf, PartOf, EvaluateFor, Compare, Conjunction],
            ..Default::default()
        };
        let out = fuse_all(&cand, Some(&exp), &[], &c, &llm, &policy, RetrievalBudget::default()).unwrap();
        let kept = out.graph.between("a", "b");
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].relation, PrerequisiteOf);
        assert_eq!(kept[0].source, Source::Expert);
    }

    #[test]
    fn empty_candidate_rejected() {
        let c = corpus();
        let llm = LlmGateway::new(Box::new(MockBackend::new()));
        let cand = KnowledgeGraph::new(GraphRole::Candidate);
        assert!(matches!(
            fuse_all(&cand, None, &[], &c, &llm, &FusionPolicy::default(), RetrievalBudget::default()),
            Err(FusionError::EmptyCandidate)
        ));
    }
}
