use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::run::{CellDescriptor, CellStatus, RunError, RunSummary};
use super::score::scores_file;
use crate::ingest::Split;
use crate::metrics::{aggregate, MetricSummary, RunScores, ACCURACY, BLEU, BLEU_VARIANT, JGA};
use crate::schema::{Mode, Task};

/// The metric prompts are ranked by; higher is better for all three.
pub fn primary_metric(task: Task) -> &'static str {
    match task {
        Task::Ic => ACCURACY,
        Task::Dst => JGA,
        Task::Nlg => BLEU,
    }
}

/// One (mode, variant, ablation) row aggregated over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub mode: Mode,
    pub variant: String,
    pub ablation: String,
    pub seeds: Vec<u64>,
    /// Seeds whose cell failed or has no test scores.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub missing_seeds: Vec<u64>,
    pub metrics: BTreeMap<String, MetricSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<BTreeMap<String, MetricSummary>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    Validation,
    Test,
}

/// The best prompt of a mode among its un-ablated rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestRow {
    pub mode: Mode,
    pub selected_by: Selection,
    pub metric: String,
    pub variant: String,
    pub metrics: BTreeMap<String, MetricSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub task: Task,
    pub primary_metric: String,
    pub bleu_variant: String,
    pub std: String,
    pub rows: Vec<ReportRow>,
    pub best: Vec<BestRow>,
}

fn read_scores(cell_dir: &Path, split: Split) -> Option<RunScores> {
    let text = fs::read_to_string(cell_dir.join(scores_file(split))).ok()?;
    serde_json::from_str(&text).ok()
}

type RowKey = (Mode, String, String);
/// Seed, test scores, validation scores.
type SeedScores = (u64, Option<RunScores>, Option<RunScores>);

fn summarize(runs: &[RunScores]) -> Option<BTreeMap<String, MetricSummary>> {
    aggregate(runs).ok().map(|a| a.metrics)
}

/// Aggregates every scored cell under `output_dir`. Unscored or failed cells
/// leave gaps rather than errors.
pub fn run_report(output_dir: &Path) -> Result<Report, RunError> {
    let summary = RunSummary::read(output_dir)?;
    // rows keep the grid order of run.json
    let mut order: Vec<RowKey> = Vec::new();
    let mut groups: BTreeMap<RowKey, Vec<SeedScores>> = BTreeMap::new();
    for outcome in &summary.cells {
        let dir = output_dir.join(&outcome.cell_id);
        let cell = CellDescriptor::read(&dir)?;
        let key = (cell.mode, cell.variant.clone(), cell.ablation.clone());
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        let (test, validation) = if cell.status == CellStatus::Ok {
            (read_scores(&dir, Split::Test), read_scores(&dir, Split::Validation))
        } else {
            (None, None)
        };
        groups.entry(key).or_default().push((cell.seed, test, validation));
    }

    let mut rows = Vec::new();
    for key in order {
        let cells = &groups[&key];
        let test: Vec<RunScores> = cells.iter().filter_map(|c| c.1.clone()).collect();
        let validation: Vec<RunScores> = cells.iter().filter_map(|c| c.2.clone()).collect();
        rows.push(ReportRow {
            mode: key.0,
            variant: key.1,
            ablation: key.2,
            seeds: cells.iter().map(|c| c.0).collect(),
            missing_seeds: cells.iter().filter(|c| c.1.is_none()).map(|c| c.0).collect(),
            metrics: summarize(&test).unwrap_or_default(),
            validation: (validation.len() == cells.len()).then(|| summarize(&validation)).flatten(),
        });
    }

    let metric = primary_metric(summary.task);
    let mut best = Vec::new();
    for &mode in &summary.modes {
        let candidates: Vec<&ReportRow> = rows.iter().filter(|r| r.mode == mode && r.ablation == "full").collect();
        let pick = |score: &dyn Fn(&ReportRow) -> Option<f64>| {
            let mut chosen: Option<(&ReportRow, f64)> = None;
            for r in &candidates {
                let s = score(r)?;
                // ties keep the earlier row
                if chosen.is_none_or(|(_, b)| s > b) {
                    chosen = Some((r, s));
                }
            }
            chosen.map(|(r, _)| r)
        };
        let by_validation = pick(&|r| r.validation.as_ref()?.get(metric).map(|m| m.mean));
        let by_test = pick(&|r| r.metrics.get(metric).map(|m| m.mean));
        for (selected_by, row) in [(Selection::Validation, by_validation), (Selection::Test, by_test)] {
            if let Some(r) = row {
                best.push(BestRow {
                    mode,
                    selected_by,
                    metric: metric.into(),
                    variant: r.variant.clone(),
                    metrics: r.metrics.clone(),
                });
            }
        }
    }

    Ok(Report {
        task: summary.task,
        primary_metric: metric.into(),
        bleu_variant: BLEU_VARIANT.into(),
        std: "population".into(),
        rows,
        best,
    })
}

fn cell(m: Option<&MetricSummary>) -> String {
    match m {
        Some(m) => format!("{:.2}±{:.2}", 100.0 * m.mean, 100.0 * m.std),
        None => "-".into(),
    }
}

impl Report {
    fn metric_names(&self) -> Vec<String> {
        let mut names: Vec<String> = Vec::new();
        for r in &self.rows {
            for k in r.metrics.keys() {
                if !names.contains(k) {
                    names.push(k.clone());
                }
            }
        }
        names
    }

    /// Plain-text table; metric values are shown ×100 as mean±std.
    pub fn to_text(&self) -> String {
        let names = self.metric_names();
        let mut table: Vec<Vec<String>> = vec![
            ["mode", "variant", "ablation", "seeds"].iter().map(|s| s.to_string()).chain(names.iter().cloned()).collect(),
        ];
        for r in &self.rows {
            let scored = r.seeds.len() - r.missing_seeds.len();
            let mut line = vec![r.mode.to_string(), r.variant.clone(), r.ablation.clone(), format!("{scored}/{}", r.seeds.len())];
            line.extend(names.iter().map(|n| cell(r.metrics.get(n))));
            table.push(line);
        }
        for b in &self.best {
            let by = match b.selected_by {
                Selection::Validation => "best (validation)",
                Selection::Test => "best (test)",
            };
            let mut line = vec![b.mode.to_string(), b.variant.clone(), by.to_string(), String::new()];
            line.extend(names.iter().map(|n| cell(b.metrics.get(n))));
            table.push(line);
        }
        let widths: Vec<usize> = (0..table[0].len())
            .map(|c| table.iter().map(|row| row[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        let _ = write!(out, "task {} | ranked by {} | std {} | values x100", self.task, self.primary_metric, self.std);
        if self.task == Task::Nlg {
            let _ = write!(out, " | BLEU {}", self.bleu_variant);
        }
        out.push('\n');
        for row in &table {
            let cells: Vec<String> =
                row.iter().zip(&widths).map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count()))).collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        }
        out
    }
}
