//! Graph-grounded question answering: the model writes graph queries, the
//! results become context, and the answer is coerced to the task's type.

mod command;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::extract::SkippedFragment;
use crate::graph::{normalize_surface, KnowledgeGraph, RelationType};
use crate::llm::{bindings, Bindings, LlmError, LlmGateway, TemplateId};

pub use command::{execute_command, parse_command, shortest_path, CommandOutput, GraphCommand};

#[derive(Debug, thiserror::Error)]
pub enum QaError {
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error(transparent)]
    Llm(#[from] LlmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum QaTask {
    T1,
    T2,
    T3,
    T4,
    T5,
    T6,
}

impl QaTask {
    pub const ALL: [QaTask; 6] = [QaTask::T1, QaTask::T2, QaTask::T3, QaTask::T4, QaTask::T5, QaTask::T6];

    pub fn name(self) -> &'static str {
        match self {
            QaTask::T1 => "relation judgment",
            QaTask::T2 => "prerequisite prediction",
            QaTask::T3 => "path searching",
            QaTask::T4 => "sub-graph completion",
            QaTask::T5 => "similar entities",
            QaTask::T6 => "idea hamster",
        }
    }

    pub fn answer_format(self) -> &'static str {
        match self {
            QaTask::T1 => "Answer True or False only.",
            QaTask::T2 | QaTask::T5 => "List the entities only, separated by commas.",
            QaTask::T3 => "List the entities of the learning path in order, separated by commas.",
            QaTask::T4 => {
                "Answer with one relation type only: Is-a-Prerequisite-of, Used-for, Compare, Conjunction, Hyponym-Of, Evaluate-for or Part-of."
            }
            QaTask::T6 => "Answer in free text.",
        }
    }
}

impl fmt::Display for QaTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for QaTask {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        QaTask::ALL
            .into_iter()
            .find(|t| t.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown task {s:?} (expected T1..T6)"))
    }
}

/// A typed answer (or gold value).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Answer {
    Bool(bool),
    Relation(RelationType),
    Entities(Vec<String>),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaItem {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub task: QaTask,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<Answer>,
}

fn coerce_gold(task: QaTask, v: &Value) -> Result<Option<Answer>, String> {
    if v.is_null() {
        return if task == QaTask::T6 { Ok(None) } else { Err(format!("{task} requires a gold answer")) };
    }
    match task {
        QaTask::T1 => match v {
            Value::Bool(b) => Ok(Some(Answer::Bool(*b))),
            Value::String(s) => parse_bool(s).map(|b| Some(Answer::Bool(b))).ok_or_else(|| format!("{s:?} is not a boolean")),
            _ => Err("T1 gold must be a boolean".into()),
        },
        QaTask::T2 | QaTask::T3 | QaTask::T5 => match v {
            Value::Array(items) => {
                let strs: Option<Vec<&str>> = items.iter().map(Value::as_str).collect();
                let strs = strs.ok_or("entity list must hold strings")?;
                Ok(Some(Answer::Entities(normalize_entity_list(strs))))
            }
            Value::String(s) => Ok(Some(Answer::Entities(split_entities(s)))),
            _ => Err(format!("{task} gold must be an entity list")),
        },
        QaTask::T4 => {
            let s = v.as_str().ok_or("T4 gold must be a relation name")?;
            RelationType::parse(s).map(|r| Some(Answer::Relation(r))).map_err(|e| e.to_string())
        }
        QaTask::T6 => Ok(Some(Answer::Text(v.as_str().map(str::to_string).unwrap_or_else(|| v.to_string())))),
    }
}

/// TutorQA-style JSONL: `{"task": "T1", "question": "...", "gold": ...}` per line.
pub fn parse_items(text: &str) -> Result<Vec<QaItem>, QaError> {
    let mut items = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| QaError::Schema { line: line_no, message };
        let v: Value = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        let task: QaTask = v
            .get("task")
            .and_then(Value::as_str)
            .ok_or_else(|| err("missing task".into()))?
            .parse()
            .map_err(err)?;
        let question = v.get("question").and_then(Value::as_str).ok_or_else(|| err("missing question".into()))?;
        let gold = coerce_gold(task, v.get("gold").unwrap_or(&Value::Null)).map_err(err)?;
        let id = v.get("id").map(|x| x.as_str().map(str::to_string).unwrap_or_else(|| x.to_string()));
        items.push(QaItem { id, task, question: question.to_string(), gold });
    }
    Ok(items)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandPlan {
    pub commands: Vec<GraphCommand>,
    pub skipped: Vec<SkippedFragment>,
    pub exchange_ref: String,
    /// No usable command: the answer stage runs without graph context.
    pub degraded: bool,
}

pub fn command_bindings(question: &str) -> Bindings {
    bindings([("question", question)])
}

fn strip_list_marker(line: &str) -> &str {
    let l = line.trim().trim_start_matches(['-', '*', '•']).trim_start();
    let digits = l.len() - l.trim_start_matches(|c: char| c.is_ascii_digit()).len();
    if digits > 0 {
        if let Some(rest) = l[digits..].strip_prefix('.').or_else(|| l[digits..].strip_prefix(')')) {
            return rest.trim_start();
        }
    }
    l
}

/// Parses the model's command listing, one command per line.
pub fn parse_command_lines(text: &str) -> (Vec<GraphCommand>, Vec<SkippedFragment>) {
    let mut commands = Vec::new();
    let mut skipped = Vec::new();
    for line in text.lines() {
        let l = strip_list_marker(line);
        if l.is_empty() || l.starts_with("```") {
            continue;
        }
        match parse_command(l) {
            Ok(c) => {
                if !commands.contains(&c) {
                    commands.push(c);
                }
            }
            Err(reason) => skipped.push(SkippedFragment { raw: line.to_string(), reason }),
        }
    }
    (commands, skipped)
}

pub fn generate_commands(llm: &LlmGateway, question: &str) -> Result<CommandPlan, QaError> {
    let ex = llm.complete(TemplateId::QaCommand, command_bindings(question))?;
    let (commands, skipped) = parse_command_lines(&ex.raw_response);
    Ok(CommandPlan { degraded: commands.is_empty(), commands, skipped, exchange_ref: ex.id })
}

/// Executes every command and joins the non-empty outputs; `None` if nothing was retrieved.
pub fn build_context(kg: &KnowledgeGraph, commands: &[GraphCommand], directed: bool) -> String {
    let blocks: Vec<String> = commands
        .iter()
        .map(|c| execute_command(kg, c, directed).render())
        .filter(|b| !b.is_empty())
        .collect();
    if blocks.is_empty() {
        "None".into()
    } else {
        blocks.join("\n")
    }
}

pub fn answer_bindings(task: QaTask, question: &str, context: &str) -> Bindings {
    bindings([("context", context), ("question", question), ("answer_format", task.answer_format())])
}

fn parse_bool(s: &str) -> Option<bool> {
    s.split(|c: char| !c.is_alphanumeric()).find_map(|w| match w.to_ascii_lowercase().as_str() {
        "true" | "yes" => Some(true),
        "false" | "no" => Some(false),
        _ => None,
    })
}

fn normalize_entity_list<'a, I: IntoIterator<Item = &'a str>>(items: I) -> Vec<String> {
    let mut seen = BTreeSet::new();
    items
        .into_iter()
        .map(strip_list_marker)
        .map(|s| s.trim_matches(|c: char| matches!(c, '"' | '\'' | '`' | '.' | ';')))
        .filter(|s| !s.eq_ignore_ascii_case("none"))
        .filter_map(|s| normalize_surface(s).ok())
        .filter(|s| seen.insert(s.clone()))
        .collect()
}

/// Comma/newline separated list, normalized and de-duplicated in order.
pub fn split_entities(text: &str) -> Vec<String> {
    normalize_entity_list(text.split([',', '\n']))
}

/// Finds the earliest relation spelling in free text.
fn find_relation(text: &str) -> Option<RelationType> {
    if let Ok(r) = RelationType::parse(text) {
        return Some(r);
    }
    let lower = text.to_lowercase();
    let lower = lower.as_str();
    RelationType::ALL
        .iter()
        .flat_map(|r| r.surface_spellings().iter().filter_map(move |s| lower.find(s).map(|at| (at, *r))))
        .min_by_key(|(at, _)| *at)
        .map(|(_, r)| r)
}

/// Converts a raw answer to the task's type; `None` when it cannot be coerced.
pub fn coerce_answer(task: QaTask, raw: &str) -> Option<Answer> {
    match task {
        QaTask::T1 => parse_bool(raw).map(Answer::Bool),
        QaTask::T2 | QaTask::T3 | QaTask::T5 => Some(Answer::Entities(split_entities(raw))),
        QaTask::T4 => find_relation(raw).map(Answer::Relation),
        QaTask::T6 => Some(Answer::Text(raw.to_string())),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerOutcome {
    pub answer: Option<Answer>,
    pub raw: String,
    pub exchange_ref: String,
}

pub fn answer(llm: &LlmGateway, item: &QaItem, context: &str) -> Result<AnswerOutcome, QaError> {
    let ex = llm.complete(TemplateId::QaAnswer, answer_bindings(item.task, &item.question, context))?;
    Ok(AnswerOutcome { answer: coerce_answer(item.task, &ex.raw_response), raw: ex.raw_response, exchange_ref: ex.id })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaOptions {
    /// PATH follows PrerequisiteOf edges head to tail only.
    pub directed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPrediction {
    pub index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub task: QaTask,
    pub question: String,
    pub commands: Vec<String>,
    pub context: String,
    pub answer: Option<Answer>,
    pub raw_answer: String,
    /// The answer could not be coerced, or no command was usable.
    pub degraded: bool,
    pub command_exchange: String,
    pub answer_exchange: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn answer_item(llm: &LlmGateway, kg: &KnowledgeGraph, index: usize, item: &QaItem, opts: QaOptions) -> QaPrediction {
    let mut pred = QaPrediction {
        index,
        id: item.id.clone(),
        task: item.task,
        question: item.question.clone(),
        commands: Vec::new(),
        context: "None".into(),
        answer: None,
        raw_answer: String::new(),
        degraded: true,
        command_exchange: String::new(),
        answer_exchange: String::new(),
        error: None,
    };
    let plan = match generate_commands(llm, &item.question) {
        Ok(p) => p,
        Err(e) => {
            pred.error = Some(e.to_string());
            return pred;
        }
    };
    pred.commands = plan.commands.iter().map(|c| c.to_string()).collect();
    pred.command_exchange = plan.exchange_ref;
    pred.context = build_context(kg, &plan.commands, opts.directed);
    match answer(llm, item, &pred.context) {
        Ok(out) => {
            pred.degraded = plan.degraded || out.answer.is_none();
            pred.answer = out.answer;
            pred.raw_answer = out.raw;
            pred.answer_exchange = out.exchange_ref;
        }
        Err(e) => pred.error = Some(e.to_string()),
    }
    pred
}

/// Answers every item; per-item failures are recorded in the prediction.
pub fn run_benchmark(items: &[QaItem], kg: &KnowledgeGraph, llm: &LlmGateway, opts: QaOptions) -> Vec<QaPrediction> {
    let indexed: Vec<(usize, &QaItem)> = items.iter().enumerate().collect();
    llm.map_bounded(&indexed, |(i, item)| answer_item(llm, kg, *i, item, opts))
}
