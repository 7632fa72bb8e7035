//! The seven relation types of the scientific knowledge graph.
//!
//! Storage uses one canonical snake-case spelling per type (`Prerequisite_of`,
//! `Used_for`, ...). Prompts use the hyphenated spellings (`Is-a-Prerequisite-of`,
//! `Used-for`, ...). Parsing accepts both families plus case and separator
//! variations.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RelationType {
    PrerequisiteOf,
    UsedFor,
    Compare,
    Conjunction,
    HyponymOf,
    EvaluateFor,
    PartOf,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown relation {0:?}")]
pub struct UnknownRelation(pub String);

impl RelationType {
    pub const ALL: [RelationType; 7] = [
        RelationType::PrerequisiteOf,
        RelationType::UsedFor,
        RelationType::Compare,
        RelationType::Conjunction,
        RelationType::HyponymOf,
        RelationType::EvaluateFor,
        RelationType::PartOf,
    ];

    /// Only `Compare` and `Conjunction` are direction-insensitive.
    pub fn is_symmetric(self) -> bool {
        matches!(self, RelationType::Compare | RelationType::Conjunction)
    }

    pub fn storage_name(self) -> &'static str {
        match self {
            RelationType::PrerequisiteOf => "Prerequisite_of",
            RelationType::UsedFor => "Used_for",
            RelationType::Compare => "Compare",
            RelationType::Conjunction => "Conjunction",
            RelationType::HyponymOf => "Hyponym_of",
            RelationType::EvaluateFor => "Evaluate_for",
            RelationType::PartOf => "Part_of",
        }
    }

    /// Spelling used inside rendered prompts.
    pub fn prompt_name(self) -> &'static str {
        match self {
            RelationType::PrerequisiteOf => "Is-a-Prerequisite-of",
            RelationType::UsedFor => "Used-for",
            RelationType::Compare => "Compare",
            RelationType::Conjunction => "Conjunction",
            RelationType::HyponymOf => "Hyponym-Of",
            RelationType::EvaluateFor => "Evaluate-for",
            RelationType::PartOf => "Part-of",
        }
    }

    /// Lenient parse: case-insensitive, ignores `-`, `_` and whitespace.
    pub fn parse(s: &str) -> Result<Self, UnknownRelation> {
        let key: String = s
            .trim()
            .trim_matches(|c: char| matches!(c, '"' | '\'' | '`' | '<' | '>' | '.'))
            .chars()
            .filter(|c| !matches!(c, '-' | '_') && !c.is_whitespace())
            .flat_map(char::to_lowercase)
            .collect();
        let rel = match key.as_str() {
            "prerequisiteof" | "isaprerequisiteof" | "isprerequisiteof" => {
                RelationType::PrerequisiteOf
            }
            "usedfor" => RelationType::UsedFor,
            "compare" => RelationType::Compare,
            "conjunction" => RelationType::Conjunction,
            "hyponymof" => RelationType::HyponymOf,
            "evaluatefor" => RelationType::EvaluateFor,
            "partof" => RelationType::PartOf,
            _ => return Err(UnknownRelation(s.trim().to_string())),
        };
        Ok(rel)
    }

    /// Every spelling accepted for this type in free text, longest first.
    pub(crate) fn surface_spellings(self) -> &'static [&'static str] {
        match self {
            RelationType::PrerequisiteOf => &[
                "is-a-prerequisite-of",
                "is_a_prerequisite_of",
                "prerequisite_of",
                "prerequisite-of",
                "prerequisiteof",
            ],
            RelationType::UsedFor => &["used-for", "used_for", "usedfor"],
            RelationType::Compare => &["compare"],
            RelationType::Conjunction => &["conjunction"],
            RelationType::HyponymOf => &["hyponym-of", "hyponym_of", "hyponymof"],
            RelationType::EvaluateFor => &["evaluate-for", "evaluate_for", "evaluatefor"],
            RelationType::PartOf => &["part-of", "part_of", "partof"],
        }
    }
}

impl fmt::Display for RelationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.storage_name())
    }
}

impl FromStr for RelationType {
    type Err = UnknownRelation;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RelationType::parse(s)
    }
}

impl Serialize for RelationType {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.storage_name())
    }
}

impl<'de> Deserialize<'de> for RelationType {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        RelationType::parse(&s).map_err(serde::de::Error::custom)
    }
}
