//! TSV graph files with a JSON alias sidecar.
//!
//! ```text
//! # scikg-graph	v1	role=fused
//! head	relation	tail	source	evidence
//! bleu	Evaluate_for	machine translation	fused	["d3"]
//! ```
//!
//! Rows are written in canonical key order so equal graphs serialize to equal bytes.

#![allow(clippy::tabs_in_doc_comments)]

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    AliasClass, AliasMap, GraphError, GraphRole, KnowledgeGraph, RelationType, Source, Triplet,
};

pub const GRAPH_FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "# scikg-graph";
const COLUMNS: &str = "head\trelation\ttail\tsource\tevidence";

#[derive(Serialize, Deserialize)]
struct AliasFile {
    version: u32,
    classes: Vec<AliasClass>,
}

/// `graph.tsv` -> `graph.aliases.json`
pub fn alias_sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("aliases.json")
}

fn io_err(path: &Path, source: std::io::Error) -> GraphError {
    GraphError::Io { path: path.display().to_string(), source }
}

impl KnowledgeGraph {
    pub fn to_tsv(&self) -> String {
        let mut out = format!("{MAGIC}\tv{GRAPH_FORMAT_VERSION}\trole={}\n{COLUMNS}\n", self.role.as_str());
        for t in self.triplets.values() {
            let evidence = if t.evidence.is_empty() {
                String::new()
            } else {
                serde_json::to_string(&t.evidence).expect("string list serializes")
            };
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                t.head,
                t.relation.storage_name(),
                t.tail,
                t.source.as_str(),
                evidence
            ));
        }
        out
    }

    pub fn aliases_json(&self) -> String {
        let file = AliasFile { version: GRAPH_FORMAT_VERSION, classes: self.aliases.classes() };
        let mut s = serde_json::to_string_pretty(&file).expect("alias file serializes");
        s.push('\n');
        s
    }

    /// Parse a TSV graph; `aliases` is applied before rows are inserted.
    pub fn from_tsv(text: &str, aliases: AliasMap) -> Result<Self, GraphError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or(GraphError::Malformed { line: 1, message: "empty graph file".into() })?;
        let mut parts = header.split('\t');
        if parts.next() != Some(MAGIC) {
            return Err(GraphError::Malformed { line: 1, message: "missing graph header".into() });
        }
        let version = parts.next().unwrap_or("");
        if version != format!("v{GRAPH_FORMAT_VERSION}") {
            return Err(GraphError::VersionMismatch {
                found: version.to_string(),
                expected: GRAPH_FORMAT_VERSION,
            });
        }
        let role = parts
            .next()
            .and_then(|r| r.strip_prefix("role="))
            .and_then(GraphRole::parse)
            .ok_or(GraphError::Malformed { line: 1, message: "missing or invalid role".into() })?;

        let mut kg = KnowledgeGraph::new(role);
        kg.aliases = aliases;
        for (idx, line) in lines {
            let lineno = idx + 1;
            if line.is_empty() || line == COLUMNS {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 5 {
                return Err(GraphError::Malformed {
                    line: lineno,
                    message: format!("expected 5 tab-separated fields, found {}", fields.len()),
                });
            }
            let relation = RelationType::parse(fields[1]).map_err(|_| GraphError::UnknownRelation {
                line: lineno,
                relation: fields[1].to_string(),
            })?;
            let source = Source::parse(fields[3]).ok_or_else(|| GraphError::Malformed {
                line: lineno,
                message: format!("unknown source {:?}", fields[3]),
            })?;
            let evidence: Vec<String> = if fields[4].is_empty() {
                Vec::new()
            } else {
                serde_json::from_str(fields[4]).map_err(|e| GraphError::Malformed {
                    line: lineno,
                    message: format!("bad evidence list: {e}"),
                })?
            };
            let t = Triplet::new(fields[0], relation, fields[2], source)
                .map_err(|e| GraphError::Malformed { line: lineno, message: e.to_string() })?
                .with_evidence(evidence);
            kg.insert(t)
                .map_err(|e| GraphError::Malformed { line: lineno, message: e.to_string() })?;
        }
        Ok(kg)
    }

    pub fn parse_aliases_json(text: &str) -> Result<AliasMap, GraphError> {
        let file: AliasFile = serde_json::from_str(text)?;
        if file.version != GRAPH_FORMAT_VERSION {
            return Err(GraphError::VersionMismatch {
                found: file.version.to_string(),
                expected: GRAPH_FORMAT_VERSION,
            });
        }
        Ok(AliasMap::from_classes(&file.classes))
    }

    /// Writes `path` and its alias sidecar.
    pub fn write(&self, path: &Path) -> Result<(), GraphError> {
        fs::write(path, self.to_tsv()).map_err(|e| io_err(path, e))?;
        let side = alias_sidecar_path(path);
        fs::write(&side, self.aliases_json()).map_err(|e| io_err(&side, e))
    }

    /// Reads `path`; the alias sidecar is optional.
    pub fn read(path: &Path) -> Result<Self, GraphError> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let side = alias_sidecar_path(path);
        let aliases = if side.exists() {
            let s = fs::read_to_string(&side).map_err(|e| io_err(&side, e))?;
            Self::parse_aliases_json(&s)?
        } else {
            AliasMap::new()
        };
        Self::from_tsv(&text, aliases)
    }
}
