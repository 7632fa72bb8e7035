use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde_json::{json, Value};

use scikg::graph::{KnowledgeGraph, RelationType};
use scikg::metrics::{
    cohen_kappa, entity_count_stats, hit_rate, rating_summary, relation_distribution, similarity_score,
    EmbeddingProvider, HashedBowProvider, HttpEmbeddingProvider, RatingSheet, ScoreScale,
};
use scikg::qa::{coerce_answer, parse_items, Answer, QaItem, QaPrediction, QaTask};

pub struct EvalArgs {
    pub task: Option<QaTask>,
    pub predictions: Option<PathBuf>,
    pub gold: Option<PathBuf>,
    pub scale: ScoreScale,
    pub embedding_endpoint: Option<String>,
    pub embedding_model: String,
    pub embedding_auth_env: String,
    pub embedding_dim: usize,
    pub ratings: Option<PathBuf>,
    pub rating_scale: (i64, i64),
    pub kg: Option<PathBuf>,
}

fn read_predictions(path: &Path) -> Result<Vec<QaPrediction>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{}:{}", path.display(), i + 1)))
        .collect()
}

/// Re-types an answer against its task, since untagged JSON loses the distinction.
fn as_task(task: QaTask, a: &Answer) -> Option<Answer> {
    match (task, a) {
        (QaTask::T1, Answer::Bool(_)) | (QaTask::T4, Answer::Relation(_)) | (_, Answer::Entities(_)) => Some(a.clone()),
        (QaTask::T4 | QaTask::T2 | QaTask::T3 | QaTask::T5, Answer::Text(s)) => coerce_answer(task, s),
        (QaTask::T2 | QaTask::T3 | QaTask::T5, Answer::Relation(r)) => coerce_answer(task, r.prompt_name()),
        (QaTask::T6, Answer::Relation(r)) => Some(Answer::Text(r.prompt_name().into())),
        (QaTask::T6, Answer::Text(_)) => Some(a.clone()),
        _ => None,
    }
}

fn entities(a: Option<&Answer>) -> Vec<String> {
    match a {
        Some(Answer::Entities(v)) => v.clone(),
        _ => Vec::new(),
    }
}

fn provider(args: &EvalArgs) -> Box<dyn EmbeddingProvider> {
    match &args.embedding_endpoint {
        Some(url) => Box::new(HttpEmbeddingProvider::new(url, &args.embedding_model, &args.embedding_auth_env, args.embedding_dim)),
        None => Box::new(HashedBowProvider::default()),
    }
}

fn eval_task(task: QaTask, pairs: &[(&QaItem, Option<&QaPrediction>)], args: &EvalArgs) -> Result<Value> {
    let n = pairs.len();
    let answered = pairs.iter().filter(|(_, p)| p.is_some_and(|p| p.answer.is_some())).count();
    let answers: Vec<Option<Answer>> =
        pairs.iter().map(|(_, p)| p.and_then(|p| p.answer.as_ref()).and_then(|a| as_task(task, a))).collect();
    let mut out = json!({ "task": task.to_string(), "name": task.name(), "items": n, "answered": answered });
    match task {
        QaTask::T1 | QaTask::T4 => {
            let correct = pairs.iter().zip(&answers).filter(|((item, _), a)| a.is_some() && item.gold == **a).count();
            out["accuracy"] = json!(args.scale.apply(correct as f64 / n as f64));
        }
        QaTask::T2 | QaTask::T3 => {
            let prov = provider(args);
            let mut total = 0.0;
            for ((item, _), a) in pairs.iter().zip(&answers) {
                let pred = entities(a.as_ref());
                let gold = entities(item.gold.as_ref());
                // Unanswered or empty lists score zero.
                if !pred.is_empty() && !gold.is_empty() {
                    total += similarity_score(&pred, &gold, prov.as_ref())?;
                }
            }
            out["similarity"] = json!(args.scale.apply(total / n as f64));
            out["embedding_provider"] = json!(prov.name());
            let lists: Vec<Vec<String>> = answers.iter().map(|a| entities(a.as_ref())).collect();
            out["mean_entity_count"] = json!(entity_count_stats(&lists));
        }
        QaTask::T5 => {
            let mut total = 0.0;
            for ((item, _), a) in pairs.iter().zip(&answers) {
                total += hit_rate(&entities(a.as_ref()), &entities(item.gold.as_ref()))?;
            }
            out["hit_rate"] = json!(total / n as f64);
        }
        QaTask::T6 => {
            out["note"] = json!("free-text answers are scored by expert rating sheets (eval --ratings)");
        }
    }
    Ok(out)
}

fn eval_qa(args: &EvalArgs) -> Result<Value> {
    let (Some(ppath), Some(gpath)) = (&args.predictions, &args.gold) else {
        bail!("QA evaluation needs --predictions and --gold");
    };
    let preds = read_predictions(ppath)?;
    let gold_text = fs::read_to_string(gpath).with_context(|| format!("reading {}", gpath.display()))?;
    let items = parse_items(&gold_text).with_context(|| format!("in {}", gpath.display()))?;
    let by_index: BTreeMap<usize, &QaPrediction> = preds.iter().map(|p| (p.index, p)).collect();
    let mut reports = Vec::new();
    for task in QaTask::ALL {
        if args.task.is_some_and(|t| t != task) {
            continue;
        }
        let pairs: Vec<(&QaItem, Option<&QaPrediction>)> = items
            .iter()
            .enumerate()
            .filter(|(_, it)| it.task == task)
            .map(|(i, it)| (it, by_index.get(&i).copied().filter(|p| p.task == task)))
            .collect();
        if pairs.is_empty() {
            if args.task.is_some() {
                bail!("no {task} items in {}", gpath.display());
            }
            continue;
        }
        reports.push(eval_task(task, &pairs, args)?);
    }
    Ok(match (args.task, reports.len()) {
        (Some(_), 1) => reports.remove(0),
        _ => json!({ "tasks": reports }),
    })
}

fn eval_ratings(path: &Path, scale: (i64, i64)) -> Result<Value> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let sheet = RatingSheet::from_csv(&text, scale)?;
    let summary = rating_summary(&sheet)?;
    let groups: BTreeMap<String, Value> = summary
        .iter()
        .map(|(g, s)| (g.clone(), json!({ "n": s.n, "mean": s.mean, "std": s.std, "display": s.display() })))
        .collect();
    let mut out = json!({ "scale": [scale.0, scale.1], "groups": groups });
    let mut by_rater: BTreeMap<&str, BTreeMap<&str, i64>> = BTreeMap::new();
    for r in &sheet.items {
        by_rater.entry(&r.rater_id).or_default().insert(&r.item_id, r.score);
    }
    if let [(ra, a), (rb, b)] = by_rater.iter().collect::<Vec<_>>()[..] {
        let shared: Vec<(i64, i64)> = a.iter().filter_map(|(item, sa)| b.get(item).map(|sb| (*sa, *sb))).collect();
        if !shared.is_empty() {
            let (va, vb): (Vec<i64>, Vec<i64>) = shared.into_iter().unzip();
            out["kappa"] = json!({ "raters": [ra, rb], "items": va.len(), "value": cohen_kappa(&va, &vb)? });
        }
    }
    Ok(out)
}

fn eval_graph(path: &Path) -> Result<Value> {
    let kg = KnowledgeGraph::read(path)?;
    let dist: BTreeMap<&str, f64> =
        relation_distribution(&kg)?.into_iter().map(|(r, p)| (RelationType::storage_name(r), p)).collect();
    Ok(json!({ "triplets": kg.len(), "entities": kg.entities().len(), "relation_distribution": dist }))
}

pub fn run(args: &EvalArgs) -> Result<Value> {
    if let Some(p) = &args.ratings {
        return eval_ratings(p, args.rating_scale);
    }
    if let Some(p) = &args.kg {
        return eval_graph(p);
    }
    eval_qa(args)
}
