//! Typed knowledge-graph model: triplets over the seven relation types, entity
//! aliases, incident subgraphs, conflict detection and TSV serialization.

mod alias;
mod io;
mod relation;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

pub use alias::{AliasClass, AliasMap};
pub(crate) use alias::prefer_surface;
pub use io::{alias_sidecar_path, GRAPH_FORMAT_VERSION};
pub use relation::{RelationType, UnknownRelation};

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("entity surface is empty after normalization")]
    EmptySurface,
    #[error("self-loop on entity {0:?}")]
    SelfLoop(String),
    #[error("unsupported graph file version {found:?} (expected {expected})")]
    VersionMismatch { found: String, expected: u32 },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: unknown relation {relation:?}")]
    UnknownRelation { line: usize, relation: String },
    #[error("graph invariant violated: {0}")]
    Invariant(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("alias sidecar: {0}")]
    AliasJson(#[from] serde_json::Error),
}

/// Trim, collapse internal whitespace to single spaces, lowercase.
pub fn normalize_surface(s: &str) -> Result<String, GraphError> {
    let out = s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    if out.is_empty() {
        Err(GraphError::EmptySurface)
    } else {
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Extracted,
    Expert,
    Fused,
    Novel,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Extracted => "extracted",
            Source::Expert => "expert",
            Source::Fused => "fused",
            Source::Novel => "novel",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "extracted" => Some(Source::Extracted),
            "expert" => Some(Source::Expert),
            "fused" => Some(Source::Fused),
            "novel" => Some(Source::Novel),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphRole {
    /// Zero-shot graph produced by extraction.
    Candidate,
    /// Expert-annotated reference graph.
    Expert,
    Fused,
}

impl GraphRole {
    pub fn as_str(self) -> &'static str {
        match self {
            GraphRole::Candidate => "candidate",
            GraphRole::Expert => "expert",
            GraphRole::Fused => "fused",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "candidate" => Some(GraphRole::Candidate),
            "expert" => Some(GraphRole::Expert),
            "fused" => Some(GraphRole::Fused),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triplet {
    pub head: String,
    pub relation: RelationType,
    pub tail: String,
    pub source: Source,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub evidence: Vec<String>,
}

impl Triplet {
    /// Normalizes both endpoints; rejects empty surfaces and self-loops.
    pub fn new(
        head: &str,
        relation: RelationType,
        tail: &str,
        source: Source,
    ) -> Result<Self, GraphError> {
        let head = normalize_surface(head)?;
        let tail = normalize_surface(tail)?;
        if head == tail {
            return Err(GraphError::SelfLoop(head));
        }
        Ok(Triplet { head, relation, tail, source, evidence: Vec::new() })
    }

    pub fn with_evidence(mut self, evidence: Vec<String>) -> Self {
        self.evidence = evidence;
        self
    }

    pub fn key(&self) -> PairKey {
        canonical_pair(self)
    }

    pub fn pair(&self) -> UnorderedPair {
        UnorderedPair::new(&self.head, &self.tail)
    }

    pub fn touches(&self, entity: &str) -> bool {
        self.head == entity || self.tail == entity
    }

    /// `(head, Relation-spelling, tail)` as written in prompts.
    pub fn to_prompt_string(&self) -> String {
        format!("({}, {}, {})", self.head, self.relation.prompt_name(), self.tail)
    }
}

impl fmt::Display for Triplet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.head, self.relation, self.tail)
    }
}

/// Identity of a triplet: directional relations keep (head, tail), symmetric
/// relations order endpoints lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PairKey {
    pub head: String,
    pub tail: String,
    pub relation: RelationType,
}

pub fn canonical_pair(t: &Triplet) -> PairKey {
    let (head, tail) = if t.relation.is_symmetric() && t.tail < t.head {
        (t.tail.clone(), t.head.clone())
    } else {
        (t.head.clone(), t.tail.clone())
    };
    PairKey { head, tail, relation: t.relation }
}

/// Unordered entity pair, stored as (min, max).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct UnorderedPair(pub String, pub String);

impl UnorderedPair {
    pub fn new(a: &str, b: &str) -> Self {
        if a <= b {
            UnorderedPair(a.to_string(), b.to_string())
        } else {
            UnorderedPair(b.to_string(), a.to_string())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Subgraph {
    pub center: String,
    pub triplets: Vec<Triplet>,
}

impl Subgraph {
    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    pub fn entities(&self) -> BTreeSet<String> {
        entity_set(&self.triplets)
    }
}

/// Two or more triplets between the same unordered entity pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConflictSet {
    pub pair: UnorderedPair,
    pub triplets: Vec<Triplet>,
}

pub(crate) fn entity_set(triplets: &[Triplet]) -> BTreeSet<String> {
    triplets
        .iter()
        .flat_map(|t| [t.head.clone(), t.tail.clone()])
        .collect()
}

/// Prompt rendering of a triplet list: `(a, R, b)(c, R, d)`, or `None` when empty.
pub fn render_prompt_triplets<'a, I: IntoIterator<Item = &'a Triplet>>(triplets: I) -> String {
    let out: String = triplets.into_iter().map(Triplet::to_prompt_string).collect();
    if out.is_empty() {
        "None".to_string()
    } else {
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeGraph {
    role: GraphRole,
    triplets: BTreeMap<PairKey, Triplet>,
    aliases: AliasMap,
}

impl KnowledgeGraph {
    pub fn new(role: GraphRole) -> Self {
        KnowledgeGraph { role, triplets: BTreeMap::new(), aliases: AliasMap::new() }
    }

    pub fn role(&self) -> GraphRole {
        self.role
    }

    pub fn aliases(&self) -> &AliasMap {
        &self.aliases
    }

    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    /// Triplets in canonical key order.
    pub fn triplets(&self) -> impl Iterator<Item = &Triplet> {
        self.triplets.values()
    }

    pub fn contains_key(&self, key: &PairKey) -> bool {
        self.triplets.contains_key(key)
    }

    pub fn get(&self, key: &PairKey) -> Option<&Triplet> {
        self.triplets.get(key)
    }

    pub fn entities(&self) -> BTreeSet<String> {
        self.triplets
            .values()
            .flat_map(|t| [t.head.clone(), t.tail.clone()])
            .collect()
    }

    pub fn canonical<'a>(&'a self, s: &'a str) -> &'a str {
        self.aliases.canonical(s)
    }

    fn canonicalize(&self, mut t: Triplet) -> Result<Triplet, GraphError> {
        t.head = self.aliases.canonical(&t.head).to_string();
        t.tail = self.aliases.canonical(&t.tail).to_string();
        if t.head == t.tail {
            return Err(GraphError::SelfLoop(t.head));
        }
        if t.relation.is_symmetric() && t.tail < t.head {
            std::mem::swap(&mut t.head, &mut t.tail);
        }
        Ok(t)
    }

    /// Insert after alias rewriting. Duplicates keep the first triplet and merge
    /// evidence. Returns `true` when the key was new.
    pub fn insert(&mut self, t: Triplet) -> Result<bool, GraphError> {
        let t = self.canonicalize(t)?;
        let key = canonical_pair(&t);
        match self.triplets.get_mut(&key) {
            Some(existing) => {
                for doc in t.evidence {
                    if !existing.evidence.contains(&doc) {
                        existing.evidence.push(doc);
                    }
                }
                Ok(false)
            }
            None => {
                self.triplets.insert(key, t);
                Ok(true)
            }
        }
    }

    pub fn remove(&mut self, key: &PairKey) -> Option<Triplet> {
        self.triplets.remove(key)
    }

    /// Replace the alias map and rewrite every triplet onto canonical entities.
    /// Triplets collapsing into self-loops are dropped and returned.
    pub fn set_aliases(&mut self, aliases: AliasMap) -> Vec<Triplet> {
        self.aliases = aliases;
        let old = std::mem::take(&mut self.triplets);
        let mut dropped = Vec::new();
        for t in old.into_values() {
            match self.canonicalize(t.clone()) {
                Ok(_) => {
                    let _ = self.insert(t);
                }
                Err(_) => dropped.push(t),
            }
        }
        dropped
    }

    /// Triplets incident to the canonical class of `q`.
    pub fn subgraph(&self, q: &str) -> Subgraph {
        let center = self.aliases.canonical(q).to_string();
        let triplets = self
            .triplets
            .values()
            .filter(|t| t.touches(&center))
            .cloned()
            .collect();
        Subgraph { center, triplets }
    }

    /// Triplets between `a` and `b` in either direction.
    pub fn between(&self, a: &str, b: &str) -> Vec<&Triplet> {
        let a = self.aliases.canonical(a);
        let b = self.aliases.canonical(b);
        self.triplets
            .values()
            .filter(|t| (t.head == a && t.tail == b) || (t.head == b && t.tail == a))
            .collect()
    }

    /// One conflict set per unordered pair carrying two or more distinct
    /// (relation, direction) combinations.
    pub fn detect_conflicts(&self) -> Vec<ConflictSet> {
        let mut groups: BTreeMap<UnorderedPair, Vec<Triplet>> = BTreeMap::new();
        for t in self.triplets.values() {
            groups.entry(t.pair()).or_default().push(t.clone());
        }
        groups
            .into_iter()
            .filter(|(_, ts)| ts.len() > 1)
            .map(|(pair, triplets)| ConflictSet { pair, triplets })
            .collect()
    }

    /// Checks the storage invariants, plus pair uniqueness for fused graphs.
    pub fn check_invariants(&self) -> Result<(), GraphError> {
        for (key, t) in &self.triplets {
            if t.head == t.tail {
                return Err(GraphError::Invariant(format!("self-loop {t}")));
            }
            if self.aliases.canonical(&t.head) != t.head || self.aliases.canonical(&t.tail) != t.tail
            {
                return Err(GraphError::Invariant(format!("non-canonical entity in {t}")));
            }
            if *key != canonical_pair(t) {
                return Err(GraphError::Invariant(format!("misfiled key for {t}")));
            }
        }
        if self.role == GraphRole::Fused {
            if let Some(c) = self.detect_conflicts().first() {
                return Err(GraphError::Invariant(format!(
                    "fused graph holds {} relations between {:?} and {:?}",
                    c.triplets.len(),
                    c.pair.0,
                    c.pair.1
                )));
            }
        }
        Ok(())
    }
}
