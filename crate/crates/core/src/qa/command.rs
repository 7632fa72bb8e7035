//! Graph query commands: a strict line grammar and their execution.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::graph::{normalize_surface, KnowledgeGraph, RelationType, Triplet};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GraphCommand {
    Neighbors { entity: String, depth: u32 },
    Path { a: String, b: String },
    Subgraph { entity: String, hops: u32 },
    Relation { a: String, b: String },
}

impl fmt::Display for GraphCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphCommand::Neighbors { entity, depth } => write!(f, "NEIGHBORS({entity}, {depth})"),
            GraphCommand::Path { a, b } => write!(f, "PATH({a}, {b})"),
            GraphCommand::Subgraph { entity, hops } => write!(f, "SUBGRAPH({entity}, {hops})"),
            GraphCommand::Relation { a, b } => write!(f, "RELATION({a}, {b})"),
        }
    }
}

fn entity_arg(s: &str) -> Result<String, String> {
    if s.contains(['(', ')']) {
        return Err(format!("entity {s:?} contains parentheses"));
    }
    normalize_surface(s).map_err(|_| "empty entity argument".to_string())
}

fn count_arg(s: &str) -> Result<u32, String> {
    match s.trim().parse::<u32>() {
        Ok(n) if n >= 1 => Ok(n),
        _ => Err(format!("expected a positive integer, got {:?}", s.trim())),
    }
}

/// Parses exactly one command, e.g. `PATH(word distributions, reading comprehension)`.
/// Command names are case-insensitive; nothing may follow the closing parenthesis.
pub fn parse_command(line: &str) -> Result<GraphCommand, String> {
    let line = line.trim();
    let open = line.find('(').ok_or("missing '('")?;
    let inner = line[open + 1..].strip_suffix(')').ok_or("command must end with ')'")?;
    let name = line[..open].trim().to_ascii_uppercase();
    let args: Vec<&str> = inner.split(',').collect();
    let want = |n: usize| {
        if args.len() == n {
            Ok(())
        } else {
            Err(format!("{name} takes {n} arguments, got {}", args.len()))
        }
    };
    match name.as_str() {
        "NEIGHBORS" => {
            want(2)?;
            Ok(GraphCommand::Neighbors { entity: entity_arg(args[0])?, depth: count_arg(args[1])? })
        }
        "SUBGRAPH" => {
            want(2)?;
            Ok(GraphCommand::Subgraph { entity: entity_arg(args[0])?, hops: count_arg(args[1])? })
        }
        "PATH" => {
            want(2)?;
            Ok(GraphCommand::Path { a: entity_arg(args[0])?, b: entity_arg(args[1])? })
        }
        "RELATION" => {
            want(2)?;
            Ok(GraphCommand::Relation { a: entity_arg(args[0])?, b: entity_arg(args[1])? })
        }
        _ => Err(format!("unknown command {name:?}")),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandOutput {
    pub triplets: Vec<Triplet>,
    /// Entity sequence for PATH results.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CommandOutput {
    fn note(msg: String) -> Self {
        CommandOutput { note: Some(msg), ..Default::default() }
    }

    /// One triplet per line, then the note if any.
    pub fn render(&self) -> String {
        let mut lines: Vec<String> = self.triplets.iter().map(Triplet::to_prompt_string).collect();
        if let Some(n) = &self.note {
            lines.push(format!("Note: {n}"));
        }
        lines.join("\n")
    }
}

/// Undirected adjacency, or PrerequisiteOf head->tail edges only when `directed`.
fn adjacency(kg: &KnowledgeGraph, directed: bool) -> BTreeMap<&str, BTreeSet<&str>> {
    let mut adj: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for t in kg.triplets() {
        if directed {
            if t.relation == RelationType::PrerequisiteOf {
                adj.entry(&t.head).or_default().insert(&t.tail);
            }
        } else {
            adj.entry(&t.head).or_default().insert(&t.tail);
            adj.entry(&t.tail).or_default().insert(&t.head);
        }
    }
    adj
}

fn distances<'a>(adj: &BTreeMap<&'a str, BTreeSet<&'a str>>, start: &'a str, limit: u32) -> BTreeMap<&'a str, u32> {
    let mut dist = BTreeMap::from([(start, 0u32)]);
    let mut queue = VecDeque::from([start]);
    while let Some(u) = queue.pop_front() {
        let d = dist[u];
        if d == limit {
            continue;
        }
        for &v in adj.get(u).into_iter().flatten() {
            if !dist.contains_key(v) {
                dist.insert(v, d + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Shortest path by breadth-first search with neighbours visited in sorted order.
pub fn shortest_path(kg: &KnowledgeGraph, a: &str, b: &str, directed: bool) -> Option<Vec<String>> {
    let adj = adjacency(kg, directed);
    let mut prev: BTreeMap<&str, &str> = BTreeMap::new();
    let mut seen = BTreeSet::from([a]);
    let mut queue = VecDeque::from([a]);
    while let Some(u) = queue.pop_front() {
        if u == b {
            let mut path = vec![b.to_string()];
            let mut cur = b;
            while let Some(&p) = prev.get(cur) {
                path.push(p.to_string());
                cur = p;
            }
            path.reverse();
            return Some(path);
        }
        for &v in adj.get(u).into_iter().flatten() {
            if seen.insert(v) {
                prev.insert(v, u);
                queue.push_back(v);
            }
        }
    }
    None
}

fn edge_between(kg: &KnowledgeGraph, a: &str, b: &str, directed: bool) -> Option<Triplet> {
    kg.triplets()
        .find(|t| {
            if directed {
                t.relation == RelationType::PrerequisiteOf && t.head == a && t.tail == b
            } else {
                (t.head == a && t.tail == b) || (t.head == b && t.tail == a)
            }
        })
        .cloned()
}

/// Runs one command. Unknown entities give an empty result with a note.
pub fn execute_command(kg: &KnowledgeGraph, cmd: &GraphCommand, directed: bool) -> CommandOutput {
    let known = kg.entities();
    let resolve = |e: &str| kg.canonical(e).to_string();
    let unknown: Vec<String> = match cmd {
        GraphCommand::Neighbors { entity, .. } | GraphCommand::Subgraph { entity, .. } => vec![resolve(entity)],
        GraphCommand::Path { a, b } | GraphCommand::Relation { a, b } => vec![resolve(a), resolve(b)],
    }
    .into_iter()
    .filter(|e| !known.contains(e))
    .collect();
    if !unknown.is_empty() {
        return CommandOutput::note(format!("unknown entity: {}", unknown.join(", ")));
    }
    match cmd {
        GraphCommand::Neighbors { entity, depth } => {
            let adj = adjacency(kg, false);
            let e = resolve(entity);
            let dist = distances(&adj, &e, *depth);
            let inner = |x: &str| dist.get(x).is_some_and(|d| d < depth);
            let triplets = kg.triplets().filter(|t| inner(&t.head) || inner(&t.tail)).cloned().collect();
            CommandOutput { triplets, ..Default::default() }
        }
        GraphCommand::Subgraph { entity, hops } => {
            let adj = adjacency(kg, false);
            let e = resolve(entity);
            let dist = distances(&adj, &e, *hops);
            let triplets =
                kg.triplets().filter(|t| dist.contains_key(t.head.as_str()) && dist.contains_key(t.tail.as_str())).cloned().collect();
            CommandOutput { triplets, ..Default::default() }
        }
        GraphCommand::Relation { a, b } => {
            let triplets: Vec<Triplet> = kg.between(a, b).into_iter().cloned().collect();
            if triplets.is_empty() {
                CommandOutput::note(format!("no stored relation between {} and {}", resolve(a), resolve(b)))
            } else {
                CommandOutput { triplets, ..Default::default() }
            }
        }
        GraphCommand::Path { a, b } => {
            let (a, b) = (resolve(a), resolve(b));
            match shortest_path(kg, &a, &b, directed) {
                Some(path) => {
                    let triplets = path
                        .windows(2)
                        .map(|w| edge_between(kg, &w[0], &w[1], directed).expect("BFS follows stored edges"))
                        .collect();
                    CommandOutput { triplets, path: Some(path), note: None }
                }
                None => CommandOutput::note(format!("no path from {a} to {b}")),
            }
        }
    }
}
