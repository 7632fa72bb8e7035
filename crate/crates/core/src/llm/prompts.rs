//! Prompt templates and placeholder rendering.
//!
//! Placeholders are `{name}`. `{Relation Definition}` is bound automatically to
//! the seven-relation definition block unless the caller binds it explicitly.
//! Substitution is single-pass: braces inside bound values are left alone.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::LlmError;

pub type Bindings = BTreeMap<String, String>;

pub const RELATION_DEFINITION_KEY: &str = "Relation Definition";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    Extraction,
    Fusion,
    LpPlain,
    LpCot,
    LpDoc,
    LpCon,
    LpWiki,
    QaCommand,
    QaAnswer,
}

impl TemplateId {
    pub const ALL: [TemplateId; 9] = [
        TemplateId::Extraction,
        TemplateId::Fusion,
        TemplateId::LpPlain,
        TemplateId::LpCot,
        TemplateId::LpDoc,
        TemplateId::LpCon,
        TemplateId::LpWiki,
        TemplateId::QaCommand,
        TemplateId::QaAnswer,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::Extraction => "extraction",
            TemplateId::Fusion => "fusion",
            TemplateId::LpPlain => "lp_plain",
            TemplateId::LpCot => "lp_cot",
            TemplateId::LpDoc => "lp_doc",
            TemplateId::LpCon => "lp_con",
            TemplateId::LpWiki => "lp_wiki",
            TemplateId::QaCommand => "qa_command",
            TemplateId::QaAnswer => "qa_answer",
        }
    }

    pub fn text(self) -> &'static str {
        match self {
            TemplateId::Extraction => EXTRACTION,
            TemplateId::Fusion => FUSION,
            TemplateId::LpPlain => LP_PLAIN,
            TemplateId::LpCot => LP_COT,
            TemplateId::LpDoc => LP_DOC,
            TemplateId::LpCon => LP_CON,
            TemplateId::LpWiki => LP_WIKI,
            TemplateId::QaCommand => QA_COMMAND,
            TemplateId::QaAnswer => QA_ANSWER,
        }
    }

    /// Placeholder names in order of first appearance.
    pub fn placeholders(self) -> Vec<&'static str> {
        let mut out: Vec<&'static str> = Vec::new();
        for seg in segments(self.text()) {
            if let Segment::Placeholder(name) = seg {
                if !out.contains(&name) {
                    out.push(name);
                }
            }
        }
        out
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateId {
    type Err = LlmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TemplateId::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| LlmError::UnknownTemplate(s.to_string()))
    }
}

enum Segment<'a> {
    Literal(&'a str),
    Placeholder(&'a str),
}

fn is_placeholder_name(s: &str) -> bool {
    !s.is_empty()
        && s.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | ' '))
}

fn segments(text: &str) -> Vec<Segment<'_>> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) if is_placeholder_name(&after[..close]) => {
                if open > 0 {
                    out.push(Segment::Literal(&rest[..open]));
                }
                out.push(Segment::Placeholder(&after[..close]));
                rest = &after[close + 1..];
            }
            _ => {
                out.push(Segment::Literal(&rest[..open + 1]));
                rest = after;
            }
        }
    }
    if !rest.is_empty() {
        out.push(Segment::Literal(rest));
    }
    out
}

/// Substitute every placeholder of `template`. Unbound placeholders and bindings
/// the template does not use are errors.
pub fn render(template: TemplateId, bindings: &Bindings) -> Result<String, LlmError> {
    let names = template.placeholders();
    if let Some(extra) = bindings.keys().find(|k| !names.contains(&k.as_str())) {
        return Err(LlmError::UnexpectedBinding { template, name: extra.clone() });
    }
    let mut out = String::with_capacity(template.text().len());
    for seg in segments(template.text()) {
        match seg {
            Segment::Literal(s) => out.push_str(s),
            Segment::Placeholder(name) => match bindings.get(name) {
                Some(v) => out.push_str(v),
                None if name == RELATION_DEFINITION_KEY => out.push_str(RELATION_DEFINITION),
                None => {
                    return Err(LlmError::UnboundPlaceholder { template, name: name.to_string() })
                }
            },
        }
    }
    Ok(out)
}

/// Convenience constructor for binding maps.
pub fn bindings<const N: usize>(pairs: [(&str, &str); N]) -> Bindings {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

pub const RELATION_DEFINITION: &str = r####"We define 7 types of the relations:

   a) Compare: Represents a relation between two or more entities where a
      comparison is being made. For example, "A is larger than B" or "X is more
      efficient than Y."

   b) Part-of: Denotes a relation where one entity is a constituent or component of
      another. For instance, "Wheel is a part of a Car."

   c) Conjunction: Indicates a logical or semantic relation where two or more
      entities are connected to form a group or composite idea. For example, "Salt
      and Pepper."

   d) Evaluate-for: Represents an evaluative relation where one entity is assessed
      in the context of another. For example, "A tool is evaluated for its
      effectiveness."

   e) Is-a-Prerequisite-of: This dual-purpose relation implies that one entity is
      either a characteristic of another or a required precursor for another. For
      instance, "The ability to code is a prerequisite of software development."

   f) Used-for: Denotes a functional relation where one entity is utilized in
      accomplishing or facilitating the other. For example, "A hammer is used for
      driving nails."

   g) Hyponym-Of: Establishes a hierarchical relation where one entity is a more
      specific version or subtype of another. For instance, "A Sedan is a hyponym
      of a Car."####;

const EXTRACTION: &str = r####"### Instruction:
You are a domain expert in natural language processing, and now you are building a
knowledge graph in this domain.

Given a context (### Content), and a query entity (### entity), do the following:

1. Extract the query entity and in-domain entities from the context, which should
   be fine-grained: could be introduced by a lecture slide page, or a whole
   lecture, or possibly to have a Wikipedia page.

2. Determine the relations between the query entity and the extracted entities, in
   a triplet format: (<head entity>, <relation>, <tail entity>). The relation
   should be functional, aiding learners in understanding the knowledge. The query
   entity can be the head entity or tail entity.

   {Relation Definition}

3. Please note some relations are strictly directional. For example, "A tool is
   evaluated for B" indicates (A, Evaluate-for, B), NOT (B, Evaluate-for, A).
   Among the seven relation types, only "a) Compare" and "c) Conjunction" are not
   direction-sensitive.

4. You can also extract triplets from the extracted entities, and the query entity
   may not be necessary in the triplets.

5. Your answer should ONLY contain a list of triplets, each triplet is in this
   format: (entity, relation, entity). For example: "(entity, relation, entity)
   (entity, relation, entity)." No numbering and other explanations are needed.

6. If ### Content is empty, output None.

### Content:
{context}

### entity:
{query}
"####;

const FUSION: &str = r####"### Instruction: You are a knowledge graph builder.
    Now please fuse two sub-knowledge graphs about the entity "{entity}".

Graph 1: {LLM-KG}   Graph 2: {E-G}

Rules for Fusing the Graphs:
1. Union the entities and edges.

2. If two entities are similar, or refer to the same entity, merge them into one
   entity, keeping he one that is meaningful or specific. For example, "lstm"
   versus "long short-term memory",  please keep "long short-term memory".

3. Only one relation is allowed between two entities. If there is a conflict, read
   the "### Background" to help you keep the correct relation. knowledge to keep the
   correct one. For example, (ROUGE, Evaluate-for, question answering model) and
   (ROUGE,Used-for , question answering model) are considered to be conflicts.

4. Once step 3 is done, consider every possible entity pair not covered in step 2.
   For example, take an entity from Graph 1, and match it from Graph 2. Then,
   please refer to "### Background" to summarize new triplets.

Hint: the relation types and their definition. You can use it to do Step 3.
{Relation Definition}

### Background:
{background}

### Output Instruction:
    Output the new merged data by listing the triplets. Your answer should ONLY contain triplets in this format: (entity, relation, entity). No other explanations or numbering are needed. Only triplets, no intermediate results.
"####;

const LP_PLAIN: &str = r####"We have two {domain} related entities: A: {entity_1} and B: {entity_2}.

Do you think learning {entity_1} will help in understanding {entity_2}?

Hints:
1. Answer YES or NO only.
2. This is a directional relation, which means if the answer is "YES", (B, A) is
   false, but (A, B) is true.
3. Your answer will be used to create a knowledge graph.
"####;

const LP_COT: &str = r####"We have two {domain} related entities: A: {entity_1} and B: {entity_2}.

Assess if learning {entity_1} is a prerequisite for understanding {entity_2}.

Employ the Chain of Thought to detail your reasoning before giving a final answer.

# Identify the Domain and entities: Clearly define A and B within their domain.
  Understand the specific content and scope of each entity.

# Analyze the Directional Relationship: Determine if knowledge of entity A is
  essential before one can fully grasp entity B. This involves considering if A
  provides foundational knowledge or skills required for understanding B.

# Evaluate Dependency: Assess whether B is dependent on A in such a way that
  without understanding A, one cannot understand B.

# Draw a Conclusion: Based on your analysis, decide if understanding A is a
  necessary prerequisite for understanding B.

# Provide a Clear Answer: After detailed reasoning, conclude with a distinct answer
  : <result>YES</result> if understanding A is a prerequisite for understanding B,
  or <result>NO</result> if it is not.
"####;

const LP_DOC: &str = r####"We have two {domain} related entities: A: {entity_1} and B: {entity_2}.

Do you think learning {entity_1} will help in understanding {entity_2}?

Hints:
1. Answer YES or NO only.
2. This is a directional relation, which means if the answer is "YES", (B, A) is
   false, but (A, B) is true.
3. Your answer will be used to create a knowledge graph.

And here are related contents to help:
{documents}
"####;

const LP_CON: &str = r####"We have two {domain} related entities: A: {entity_1} and B: {entity_2}.

Do you think learning {entity_1} will help in understanding {entity_2}?

Hints:
1. Answer YES or NO only.
2. This is a directional relation, which means if the answer is "YES", (B, A) is
   false, but (A, B) is true.
3. Your answer will be used to create a knowledge graph.

And here are related contents to help:

We know that {entity_1} is a prerequisite of the following entities:
{successors_1};

The following entities are the prerequisites of {entity_1}:
{predecessors_1}.

We know that {entity_2} is a prerequisite of the following entities:
{successors_2};

The following entities are the prerequisites of {entity_2}:
{predecessors_2}.
"####;

const LP_WIKI: &str = r####"We have two {domain} related entities: A: {entity_1} and B: {entity_2}.

Do you think learning {entity_1} will help in understanding {entity_2}?

Hints:
1. Answer YES or NO only.
2. This is a directional relation, which means if the answer is "YES", (B, A) is
   false, but (A, B) is true.
3. Your answer will be used to create a knowledge graph.

And here are related contents to help:
{wiki_1}
{wiki_2}
"####;

const QA_COMMAND: &str = r####"### Instruction:
You are a teaching assistant with access to a knowledge graph of scientific entities.
The graph stores triplets (head entity, relation, tail entity) with the relations
Is-a-Prerequisite-of, Used-for, Compare, Conjunction, Hyponym-Of, Evaluate-for and Part-of.

Write the graph queries needed to answer the question below, one command per line.
Only these commands are available:
NEIGHBORS(<entity>, <depth>)       triplets within <depth> hops of the entity
PATH(<entity A>, <entity B>)       the shortest chain of triplets from A to B
SUBGRAPH(<entity>, <hops>)         all triplets among entities within <hops> hops
RELATION(<entity A>, <entity B>)   the stored relation between A and B

Entity names must not contain commas or parentheses. Output only commands.

### Question:
{question}
"####;

const QA_ANSWER: &str = r####"### Instruction:
You are a teaching assistant. Answer the question using the knowledge graph context.

### Knowledge graph context:
{context}

### Question:
{question}

### Answer format:
{answer_format}
"####;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lp_plain_example() {
        let b = bindings([
            ("domain", "NLP"),
            ("entity_1", "POS Tagging"),
            ("entity_2", "Viterbi Algorithm"),
        ]);
        let p = render(TemplateId::LpPlain, &b).unwrap();
        assert!(p.contains("Do you think learning POS Tagging will help in understanding Viterbi Algorithm?"));
        assert!(p.contains("Answer YES or NO only."));
    }

    #[test]
    fn extraction_with_empty_context() {
        let b = bindings([("context", ""), ("query", "bleu")]);
        let p = render(TemplateId::Extraction, &b).unwrap();
        assert!(p.contains("If ### Content is empty, output None."));
        assert!(p.contains("### Content:\n\n"));
        assert!(p.contains("g) Hyponym-Of"));
    }

    #[test]
    fn fusion_renders_all_sections() {
        let b = bindings([
            ("entity", "rouge"),
            ("LLM-KG", "(rouge, Used-for, summarization)"),
            ("E-G", "None"),
            ("background", "ROUGE is a metric."),
        ]);
        let p = render(TemplateId::Fusion, &b).unwrap();
        assert!(p.contains("Graph 1: (rouge, Used-for, summarization)"));
        assert!(p.contains("### Background:\nROUGE is a metric."));
        assert!(p.contains("We define 7 types of the relations:"));
        assert!(p.contains("about the entity \"rouge\""));
        assert_eq!(
            TemplateId::Fusion.placeholders(),
            vec!["entity", "LLM-KG", "E-G", "Relation Definition", "background"]
        );
    }

    #[test]
    fn unbound_placeholder_is_named() {
        let b = bindings([("domain", "NLP"), ("entity_1", "a")]);
        match render(TemplateId::LpPlain, &b) {
            Err(LlmError::UnboundPlaceholder { name, .. }) => assert_eq!(name, "entity_2"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_template_id() {
        assert!(matches!("lp_magic".parse::<TemplateId>(), Err(LlmError::UnknownTemplate(_))));
        assert_eq!("lp_con".parse::<TemplateId>().unwrap(), TemplateId::LpCon);
    }

    #[test]
    fn values_with_braces_are_not_expanded() {
        let b = bindings([("context", "{query}"), ("query", "x")]);
        let p = render(TemplateId::Extraction, &b).unwrap();
        assert!(p.contains("### Content:\n{query}\n"));
    }

    #[test]
    fn every_template_renders_when_fully_bound() {
        for t in TemplateId::ALL {
            let b: Bindings = t
                .placeholders()
                .into_iter()
                .filter(|n| *n != RELATION_DEFINITION_KEY)
                .map(|n| (n.to_string(), format!("<{n}>")))
                .collect();
            let p = render(t, &b).unwrap();
            assert!(!p.contains("{entity"), "{t}");
        }
    }
}
