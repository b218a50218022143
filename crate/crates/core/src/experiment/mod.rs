//! Manifest-driven runs: sample, compile a cell grid to JSONL, score
//! predictions, and aggregate a report.
//!
//! Output layout under the run root:
//!
//! ```text
//! run.json
//! splits/seed-<n>.jsonl
//! cells/<mode>/<variant>/<ablation>/seed-<n>/
//!     cell.json  train.jsonl  validation.jsonl  test.jsonl
//!     scores.json  scores.validation.json      (after scoring)
//! ```
//!
//! Compiled records have exactly the keys `id`, `task`, `input_text`,
//! `target_text` and `meta`; predictions are `{"id", "prediction"}` lines.

mod manifest;
mod report;
mod run;
mod score;

pub use manifest::{parse_ablation, AblationSpec, DataPaths, Manifest, ManifestError};
pub use report::{primary_metric, run_report, BestRow, Report, ReportRow, Selection};
pub use run::{
    load_inputs, load_ontology, plan_cells, run_compile, run_compile_with, sample_seed, split_manifest_path,
    CellDescriptor, CellOutcome, CellSpec, CellStatus, CompileReport, FileInfo, Inputs, RunError, RunSummary,
    TaskData, CELL_FILE, RUN_FILE,
};
pub use score::{
    gold_predictions, predictions_to_jsonl, read_cell_split, read_predictions, run_score, score_examples,
    scores_file, write_scores, Prediction, ScoreError,
};

/// Environment variable that overrides a manifest's `output_dir`.
pub const OUTPUT_ENV: &str = "TOD_INSTRUCT_OUT";
