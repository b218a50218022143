use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::run::{CellDescriptor, CellStatus, RunError};
use crate::ingest::Split;
use crate::metrics::{
    bleu_stats, intent_scores, joint_goal_accuracy, prediction_value, slot_error_rate, MetricsError, RunScores,
    ACCURACY, BLEU, JGA, OUT_OF_LABELSET, SER,
};
use crate::schema::{normalize_label, CompiledExample, DialogState, SlotKey, Task, NONE_VALUE};
use crate::semantic::{parse_acts, ParseError};

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("reading {}: {message}", path.display())]
    Io { path: PathBuf, message: String },
    #[error("{}:{line}: {message}", path.display())]
    Malformed { path: PathBuf, line: usize, message: String },
    #[error("cell {0} failed to compile; nothing to score")]
    CellFailed(String),
    #[error("predictions do not match the {split} ids{}", coverage_detail(missing, extra, duplicated))]
    Coverage { split: Split, missing: Vec<String>, extra: Vec<String>, duplicated: Vec<String> },
    #[error("example `{id}` lacks meta `{key}`")]
    Meta { id: String, key: &'static str },
    #[error("example `{id}`: {source}")]
    Acts { id: String, source: ParseError },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

fn coverage_detail(missing: &[String], extra: &[String], duplicated: &[String]) -> String {
    let mut out = String::new();
    for (what, ids) in [("missing", missing), ("unknown", extra), ("duplicated", duplicated)] {
        if !ids.is_empty() {
            out.push_str(&format!("; {} {what}: {}", ids.len(), ids.join(", ")));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub prediction: String,
}

pub fn scores_file(split: Split) -> String {
    match split {
        Split::Test => "scores.json".into(),
        other => format!("scores.{other}.json"),
    }
}

fn read(path: &Path) -> Result<String, ScoreError> {
    fs::read_to_string(path).map_err(|e| ScoreError::Io { path: path.to_path_buf(), message: e.to_string() })
}

fn parse_jsonl<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> Result<Vec<T>, ScoreError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| ScoreError::Malformed {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>, ScoreError> {
    parse_jsonl(path, &read(path)?)
}

pub fn predictions_to_jsonl(predictions: &[Prediction]) -> String {
    predictions.iter().map(|p| serde_json::to_string(p).expect("predictions serialize") + "\n").collect()
}

/// The cell descriptor and the compiled examples of one split.
pub fn read_cell_split(cell_dir: &Path, split: Split) -> Result<(CellDescriptor, Vec<CompiledExample>), ScoreError> {
    let cell = CellDescriptor::read(cell_dir)?;
    if cell.status == CellStatus::Failed {
        return Err(ScoreError::CellFailed(cell.cell_id));
    }
    let path = cell_dir.join(format!("{split}.jsonl"));
    let examples = parse_jsonl(&path, &read(&path)?)?;
    Ok((cell, examples))
}

/// Targets as predictions, for dry runs.
pub fn gold_predictions(cell_dir: &Path, split: Split) -> Result<Vec<Prediction>, ScoreError> {
    let (_, examples) = read_cell_split(cell_dir, split)?;
    Ok(examples.into_iter().map(|e| Prediction { id: e.id, prediction: e.target_text }).collect())
}

fn meta<'a>(e: &'a CompiledExample, key: &'static str) -> Result<&'a str, ScoreError> {
    e.meta.get(key).map(String::as_str).ok_or_else(|| ScoreError::Meta { id: e.id.clone(), key })
}

/// Per-turn states from per-slot values, keyed by `(dialog, turn)`.
fn assemble_states<'a>(
    examples: &'a [CompiledExample],
    value: impl Fn(&'a CompiledExample) -> &'a str,
) -> Result<BTreeMap<(&'a str, u64), DialogState>, ScoreError> {
    let mut states: BTreeMap<(&str, u64), DialogState> = BTreeMap::new();
    for e in examples {
        let turn: u64 = meta(e, "turn")?.parse().map_err(|_| ScoreError::Meta { id: e.id.clone(), key: "turn" })?;
        let state = states.entry((meta(e, "dialog_id")?, turn)).or_default();
        let v = prediction_value(value(e));
        if normalize_label(v) != NONE_VALUE {
            state.insert(SlotKey::new(meta(e, "domain")?, meta(e, "slot")?), v);
        }
    }
    Ok(states)
}

/// Task metrics for `examples` against `predictions`, joined by id.
pub fn score_examples(
    task: Task,
    examples: &[CompiledExample],
    predictions: &[Prediction],
    labelset: &[String],
    split: Split,
) -> Result<(usize, BTreeMap<String, f64>), ScoreError> {
    let mut by_id: BTreeMap<&str, &str> = BTreeMap::new();
    let mut duplicated = BTreeSet::new();
    for p in predictions {
        if by_id.insert(&p.id, &p.prediction).is_some() {
            duplicated.insert(p.id.clone());
        }
    }
    let expected: BTreeSet<&str> = examples.iter().map(|e| e.id.as_str()).collect();
    let missing: Vec<String> = expected.iter().filter(|id| !by_id.contains_key(*id)).map(|s| s.to_string()).collect();
    let extra: Vec<String> = by_id.keys().filter(|id| !expected.contains(*id)).map(|s| s.to_string()).collect();
    if !(missing.is_empty() && extra.is_empty() && duplicated.is_empty()) {
        return Err(ScoreError::Coverage { split, missing, extra, duplicated: duplicated.into_iter().collect() });
    }
    let pred = |e: &CompiledExample| by_id[e.id.as_str()];
    let mut metrics = BTreeMap::new();
    let n = match task {
        Task::Ic => {
            let p: Vec<&str> = examples.iter().map(pred).collect();
            let g: Vec<&str> = examples.iter().map(|e| e.target_text.as_str()).collect();
            let s = intent_scores(&p, &g, labelset)?;
            metrics.insert(ACCURACY.into(), s.accuracy);
            metrics.insert(OUT_OF_LABELSET.into(), s.out_of_labelset_rate);
            examples.len()
        }
        Task::Dst => {
            let gold = assemble_states(examples, |e| e.target_text.as_str())?;
            let predicted = assemble_states(examples, |e| by_id[e.id.as_str()])?;
            let (p, g): (Vec<DialogState>, Vec<DialogState>) =
                gold.into_iter().map(|(k, g)| (predicted[&k].clone(), g)).unzip();
            metrics.insert(JGA.into(), joint_goal_accuracy(&p, &g)?);
            g.len()
        }
        Task::Nlg => {
            let mut frames = Vec::with_capacity(examples.len());
            for e in examples {
                frames.push(parse_acts(meta(e, "acts")?).map_err(|source| ScoreError::Acts { id: e.id.clone(), source })?);
            }
            let p: Vec<&str> = examples.iter().map(pred).collect();
            let r: Vec<&str> = examples.iter().map(|e| e.target_text.as_str()).collect();
            metrics.insert(SER.into(), slot_error_rate(&p, &frames)?);
            metrics.insert(BLEU.into(), bleu_stats(&p, &r)?.score());
            examples.len()
        }
    };
    Ok((n, metrics))
}

/// Scores one split of a compiled cell.
pub fn run_score(cell_dir: &Path, predictions: &[Prediction], split: Split) -> Result<RunScores, ScoreError> {
    let (cell, examples) = read_cell_split(cell_dir, split)?;
    let (n, metrics) = score_examples(cell.task, &examples, predictions, &cell.labelset, split)?;
    Ok(RunScores { task: cell.task, seed: cell.seed, n, metrics })
}

pub fn write_scores(cell_dir: &Path, split: Split, scores: &RunScores) -> Result<PathBuf, ScoreError> {
    let path = cell_dir.join(scores_file(split));
    let json = serde_json::to_string_pretty(scores).expect("scores serialize") + "\n";
    fs::write(&path, json).map_err(|e| ScoreError::Io { path: path.clone(), message: e.to_string() })?;
    Ok(path)
}
