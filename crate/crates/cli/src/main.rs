//! Command-line driver for manifest-based runs.
//!
//! Exit codes: 0 on success, 1 when cells fail or inputs cannot be read,
//! 2 when the manifest is invalid.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use tod_instruct::experiment::{
    gold_predictions, load_inputs, predictions_to_jsonl, read_predictions, run_compile, run_report, run_score,
    sample_seed, write_scores, AblationSpec, CellStatus, Manifest, ManifestError, RunError,
};
use tod_instruct::ingest::Split;
use tod_instruct::{AblationMask, Mode};

#[derive(Parser)]
#[command(name = "tod-instruct", version, about = "Compile, sample and score instruction-tuning runs for task-oriented dialog")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load the manifest's datasets and print ingest statistics and the dataset hash.
    Ingest { manifest: PathBuf },
    /// Write the split manifest for one seed.
    Sample {
        manifest: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compile every cell of the manifest grid.
    Compile {
        manifest: PathBuf,
        /// Run directory; overrides the manifest's `output_dir`.
        #[arg(long, env = "TOD_INSTRUCT_OUT")]
        out: Option<PathBuf>,
    },
    /// Write gold targets of a compiled cell as a predictions file.
    PredictGold {
        cell: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a predictions file against a compiled cell and store the scores in the cell.
    Score {
        cell: PathBuf,
        predictions: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
    },
    /// Aggregate scored cells of a run into a mean±std table.
    Report {
        run: PathBuf,
        /// Print the machine-readable report instead of the table.
        #[arg(long)]
        json: bool,
    },
    /// Expand a manifest with the standard ablation grid (CINS only).
    Ablate {
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Writes to stdout, treating a closed pipe (e.g. `| head`) as success.
fn stdout(text: &str) -> Result<()> {
    let mut lock = io::stdout().lock();
    match lock.write_all(text.as_bytes()).and_then(|()| lock.flush()) {
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
        r => r.context("writing to stdout"),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => stdout(text),
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Ingest { manifest } => {
            let m = Manifest::load(&manifest)?;
            let inputs = load_inputs(&m)?;
            let report = json!({
                "task": m.task,
                "dataset_hash": inputs.dataset_hash,
                "domains": inputs.domains,
                "stats": inputs.data.stats(),
            });
            stdout(&format!("{}\n", serde_json::to_string_pretty(&report)?))?;
        }
        Command::Sample { manifest, seed, out } => {
            let m = Manifest::load(&manifest)?;
            let inputs = load_inputs(&m)?;
            let split = sample_seed(&m, &inputs, seed)?;
            emit(out.as_deref(), &split.to_jsonl())?;
            eprintln!("seed {seed}: {} train, {} validation", split.train.len(), split.validation.len());
        }
        Command::Compile { manifest, out } => {
            let m = Manifest::load(&manifest)?;
            let out = out.unwrap_or_else(|| m.output_dir.clone());
            let report = run_compile(&m, &out)?;
            let failed = report.summary.failed();
            for c in report.summary.cells.iter().filter(|c| c.status == CellStatus::Failed) {
                eprintln!("cell {} failed: {}", c.cell_id, c.error.as_deref().unwrap_or("unknown error"));
            }
            stdout(&format!("{} cells, {} failed, written to {}\n", report.summary.cells.len(), failed, out.display()))?;
            if failed > 0 {
                return Ok(ExitCode::from(1));
            }
        }
        Command::PredictGold { cell, split, out } => {
            let preds = gold_predictions(&cell, split)?;
            emit(out.as_deref(), &predictions_to_jsonl(&preds))?;
        }
        Command::Score { cell, predictions, split } => {
            let preds = read_predictions(&predictions)?;
            let scores = run_score(&cell, &preds, split)?;
            write_scores(&cell, split, &scores)?;
            stdout(&format!("{}\n", serde_json::to_string_pretty(&scores)?))?;
        }
        Command::Report { run, json } => {
            let report = run_report(&run)?;
            if json {
                stdout(&format!("{}\n", serde_json::to_string_pretty(&report)?))?;
            } else {
                stdout(&report.to_text())?;
            }
        }
        Command::Ablate { manifest, out } => {
            // parse without resolving so relative paths survive the rewrite
            let text = fs::read_to_string(&manifest)
                .map_err(|source| ManifestError::Io { path: manifest.clone(), source })?;
            let mut m: Manifest =
                text.parse().map_err(|message| ManifestError::Parse { path: manifest.clone(), message })?;
            if !m.modes.contains(&Mode::Cins) {
                m.modes.push(Mode::Cins);
            }
            m.ablations = AblationMask::standard_grid().iter().map(|a| AblationSpec::Label(a.label())).collect();
            m.validate()?;
            emit(out.as_deref(), &m.to_toml())?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn is_manifest_error(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.downcast_ref::<ManifestError>().is_some() || matches!(c.downcast_ref::<RunError>(), Some(RunError::Manifest(_)))
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_manifest_error(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
