use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::manifest::{DataPaths, Manifest, ManifestError};
use crate::compiler::{CompileError, CompileOptions, Compiler, PromptCatalog, PromptChoice, TemplateLibrary};
use crate::ingest::{
    load_dst_dataset, load_intent_dataset, load_nlg_dataset, DstDataset, IngestError, IngestStats, IntentDataset,
    NlgDataset, Split,
};
use crate::metrics::BLEU_VARIANT;
use crate::sampler::{
    content_hash, label_counts, match_validation_per_label, match_validation_uniform, sample_k_dialogs_per_domain,
    sample_k_per_label, sample_percent_dialogs, sha256_hex, SampleError, SamplePlan, SplitManifest, Unit, PRNG,
};
use crate::schema::{
    validate_ontology, AblationMask, CompiledExample, Mode, NlgRepr, Ontology, SlotSpec, Task,
};
use crate::semantic::TemplateTable;

pub const RUN_FILE: &str = "run.json";
pub const CELL_FILE: &str = "cell.json";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("ontology {}: {}", path.display(), problems.join("; "))]
    Ontology { path: PathBuf, problems: Vec<String> },
    #[error("{}: {message}", path.display())]
    Input { path: PathBuf, message: String },
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error("writing {}: {source}", path.display())]
    Write { path: PathBuf, source: std::io::Error },
}

fn read_text(path: &Path) -> Result<String, RunError> {
    fs::read_to_string(path).map_err(|e| RunError::Input { path: path.to_path_buf(), message: e.to_string() })
}

fn write(path: &Path, contents: &str) -> Result<(), RunError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|source| RunError::Write { path: dir.to_path_buf(), source })?;
    }
    fs::write(path, contents).map_err(|source| RunError::Write { path: path.to_path_buf(), source })
}

pub fn load_ontology(path: &Path) -> Result<Ontology, RunError> {
    let text = read_text(path)?;
    let ontology: Ontology = serde_json::from_str(&text)
        .map_err(|e| RunError::Input { path: path.to_path_buf(), message: e.to_string() })?;
    let violations = validate_ontology(&ontology);
    if !violations.is_empty() {
        return Err(RunError::Ontology {
            path: path.to_path_buf(),
            problems: violations.iter().map(|v| format!("{}: {}", v.entity, v.rule)).collect(),
        });
    }
    Ok(ontology)
}

/// Loaded datasets, one variant per task.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskData {
    Ic(IntentDataset),
    Dst { train: DstDataset, validation: DstDataset, test: DstDataset },
    Nlg { train: NlgDataset, validation: NlgDataset, test: NlgDataset },
}

impl TaskData {
    pub fn stats(&self) -> BTreeMap<&'static str, IngestStats> {
        match self {
            TaskData::Ic(d) => [("all", d.stats.clone())].into(),
            TaskData::Dst { train, validation, test } => {
                [("train", train.stats.clone()), ("validation", validation.stats.clone()), ("test", test.stats.clone())]
                    .into()
            }
            TaskData::Nlg { train, validation, test } => {
                [("train", train.stats.clone()), ("validation", validation.stats.clone()), ("test", test.stats.clone())]
                    .into()
            }
        }
    }
}

/// Everything a run reads, loaded once and shared by all cells.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub ontology: Ontology,
    pub compiler: Compiler,
    pub data: TaskData,
    pub table: Option<TemplateTable>,
    pub domains: Vec<String>,
    pub dataset_hash: String,
}

impl Inputs {
    /// In-scope slots in ontology order.
    pub fn slots(&self) -> Vec<SlotSpec> {
        self.scoped_domains().flat_map(|d| d.slots.iter().cloned()).collect()
    }

    /// In-scope intent names in ontology order.
    pub fn labelset(&self) -> Vec<String> {
        self.scoped_domains().flat_map(|d| d.intents.iter().map(|i| i.name.clone())).collect()
    }

    fn scoped_domains(&self) -> impl Iterator<Item = &crate::schema::DomainSpec> {
        let filter = crate::ingest::DomainFilter::new(&self.domains);
        self.ontology.domains.iter().filter(move |d| filter.admits(&d.name))
    }
}

pub fn load_inputs(manifest: &Manifest) -> Result<Inputs, RunError> {
    let ontology = match &manifest.ontology {
        Some(p) => load_ontology(p)?,
        None => Ontology { name: String::new(), version: String::new(), domains: Vec::new() },
    };
    let templates = match &manifest.templates {
        Some(p) => TemplateLibrary::from_json(&read_text(p)?)?,
        None => TemplateLibrary::default(),
    };
    let catalog = match &manifest.prompt_catalog {
        Some(p) => PromptCatalog::from_json(&read_text(p)?)?,
        None => PromptCatalog::default(),
    };
    manifest.validate_prompts(&catalog)?;
    let table = match &manifest.template_table {
        Some(p) => Some(
            TemplateTable::from_json(&read_text(p)?)
                .map_err(|e| RunError::Input { path: p.clone(), message: e.to_string() })?,
        ),
        None => None,
    };
    let domains: Vec<String> = match &manifest.domains {
        Some(d) => d.clone(),
        None => ontology.domains.iter().map(|d| d.name.clone()).collect(),
    };
    let data = match (&manifest.task, &manifest.data) {
        (Task::Ic, DataPaths::Single(p)) => TaskData::Ic(load_intent_dataset(p, &ontology, &domains)?),
        (Task::Dst, DataPaths::Split { train, validation, test }) => TaskData::Dst {
            train: load_dst_dataset(train, &ontology, &domains)?,
            validation: load_dst_dataset(validation, &ontology, &domains)?,
            test: load_dst_dataset(test, &ontology, &domains)?,
        },
        (Task::Nlg, DataPaths::Split { train, validation, test }) => {
            // t2g2 needs every pair covered; naive runs load without the table
            let check = if manifest.nlg_repr == Some(NlgRepr::T2g2) { table.as_ref() } else { None };
            let keep = |d: NlgDataset| match &manifest.domains {
                Some(only) => filter_nlg(d, only),
                None => d,
            };
            TaskData::Nlg {
                train: keep(load_nlg_dataset(train, check)?),
                validation: keep(load_nlg_dataset(validation, check)?),
                test: keep(load_nlg_dataset(test, check)?),
            }
        }
        _ => unreachable!("data layout checked by Manifest::validate"),
    };
    let dataset_hash = content_hash(&data);
    Ok(Inputs { ontology, compiler: Compiler::new(templates, catalog), data, table, domains, dataset_hash })
}

/// NLG domains are service names and need not be ontology domains, so the
/// filter is applied here, by normalized name.
fn filter_nlg(mut data: NlgDataset, domains: &[String]) -> NlgDataset {
    let filter = crate::ingest::DomainFilter::new(domains);
    let before = data.items.len();
    data.items.retain(|i| filter.admits(&i.domain));
    let dropped = before - data.items.len();
    data.stats.filtered_by_domain += dropped;
    data.stats.kept -= dropped;
    data
}

/// Sampled ids for one seed, shared by every cell of that seed.
pub fn sample_seed(manifest: &Manifest, inputs: &Inputs, seed: u64) -> Result<SplitManifest, SampleError> {
    let plan = SamplePlan { seed, ..manifest.plan.clone() };
    let (unit, train, validation) = match &inputs.data {
        TaskData::Ic(d) => {
            let train = sample_k_per_label(d.split(Split::Train), plan.k(), seed)?;
            let validation = if plan.match_validation {
                let chosen: BTreeSet<&str> = train.iter().map(String::as_str).collect();
                let counts = label_counts(d.split(Split::Train).iter().filter(|e| chosen.contains(e.id.as_str())));
                match_validation_per_label(d.split(Split::Validation), &counts, seed)?
            } else {
                sorted(d.split(Split::Validation).iter().map(|e| e.id.as_str()))
            };
            (Unit::Example, train, validation)
        }
        TaskData::Dst { train, validation, .. } => {
            let t = sample_percent_dialogs(&train.dialogs, plan.k_or_pct, seed)?;
            let ids = validation.dialogs.iter().map(|d| d.id.as_str());
            let v = if plan.match_validation { match_validation_uniform(ids, t.len(), seed)? } else { sorted(ids) };
            (Unit::Dialog, t, v)
        }
        TaskData::Nlg { train, validation, .. } => {
            let t = sample_k_dialogs_per_domain(&train.items, plan.k(), seed, plan.required_coverage)?;
            let ids = validation.items.iter().map(|i| i.dialog_id.as_str());
            let v = if plan.match_validation { match_validation_uniform(ids, t.len(), seed)? } else { sorted(ids) };
            (Unit::Dialog, t, v)
        }
    };
    Ok(SplitManifest::new(&plan, inputs.dataset_hash.clone(), unit, train, validation))
}

fn sorted<'a>(ids: impl Iterator<Item = &'a str>) -> Vec<String> {
    ids.map(str::to_string).collect::<BTreeSet<_>>().into_iter().collect()
}

/// One point of the seed × mode × variant × ablation grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellSpec {
    pub seed: u64,
    pub mode: Mode,
    pub prompt: Option<PromptChoice>,
    pub mask: AblationMask,
}

impl CellSpec {
    pub fn variant(&self) -> String {
        self.prompt.as_ref().map_or_else(|| "std".to_string(), PromptChoice::label)
    }

    /// `cells/<mode>/<variant>/<ablation>/seed-<n>`, always `/`-separated.
    pub fn id(&self) -> String {
        let variant = match &self.prompt {
            None => "std".to_string(),
            Some(p) => format!("{}-{}", p.root, &p.expression.as_str()[..1]),
        };
        format!("cells/{}/{variant}/{}/seed-{}", self.mode.as_str().to_ascii_lowercase(), self.mask.label(), self.seed)
    }

    fn options(&self) -> CompileOptions {
        match &self.prompt {
            None => CompileOptions::standard(),
            Some(p) => CompileOptions::prompted(self.mode, p.clone()).with_mask(self.mask),
        }
    }
}

/// The grid in output order: mode, then variant, then ablation, then seed.
/// STD has a single variant and PE a single ablation.
pub fn plan_cells(manifest: &Manifest, catalog: &PromptCatalog) -> Vec<CellSpec> {
    let variants = manifest.variants(catalog);
    let masks = manifest.masks();
    let mut cells = Vec::new();
    for &mode in &manifest.modes {
        let prompts: Vec<Option<PromptChoice>> = match mode {
            Mode::Std => vec![None],
            _ => variants.iter().cloned().map(Some).collect(),
        };
        let mode_masks = if mode == Mode::Cins { masks.clone() } else { vec![AblationMask::NONE] };
        for prompt in &prompts {
            for mask in &mode_masks {
                for &seed in &manifest.seeds {
                    cells.push(CellSpec { seed, mode, prompt: prompt.clone(), mask: *mask });
                }
            }
        }
    }
    cells
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileInfo {
    pub path: String,
    pub records: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellStatus {
    Ok,
    Failed,
}

/// `cell.json`: what a cell holds and how it was made. Paths are relative
/// to the cell directory, except `split_manifest`, relative to the run root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellDescriptor {
    pub cell_id: String,
    pub status: CellStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub task: Task,
    pub mode: Mode,
    pub variant: String,
    pub prompt: Option<PromptChoice>,
    pub ablation: String,
    pub mask: AblationMask,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nlg_repr: Option<NlgRepr>,
    pub dataset_hash: String,
    pub split_manifest: String,
    /// In-scope intents, for the out-of-labelset rate.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub labelset: Vec<String>,
    #[serde(default)]
    pub files: BTreeMap<String, FileInfo>,
}

impl CellDescriptor {
    pub fn read(cell_dir: &Path) -> Result<Self, RunError> {
        let path = cell_dir.join(CELL_FILE);
        serde_json::from_str(&read_text(&path)?)
            .map_err(|e| RunError::Input { path, message: e.to_string() })
    }
}

/// `run.json`: the run-level record, listing cells in grid order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub task: Task,
    pub dataset_hash: String,
    pub plan: SamplePlan,
    pub seeds: Vec<u64>,
    pub modes: Vec<Mode>,
    pub variants: Vec<String>,
    pub ablations: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nlg_repr: Option<NlgRepr>,
    pub prng: String,
    pub bleu_variant: String,
    pub cells: Vec<CellOutcome>,
}

impl RunSummary {
    pub fn read(output_dir: &Path) -> Result<Self, RunError> {
        let path = output_dir.join(RUN_FILE);
        serde_json::from_str(&read_text(&path)?).map_err(|e| RunError::Input { path, message: e.to_string() })
    }

    pub fn failed(&self) -> usize {
        self.cells.iter().filter(|c| c.status == CellStatus::Failed).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellOutcome {
    pub cell_id: String,
    pub status: CellStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn split_manifest_path(seed: u64) -> String {
    format!("splits/seed-{seed}.jsonl")
}

fn to_jsonl(examples: &[CompiledExample]) -> String {
    let mut out = String::new();
    for e in examples {
        out.push_str(&serde_json::to_string(e).expect("examples serialize"));
        out.push('\n');
    }
    out
}

fn compile_split(
    manifest: &Manifest,
    inputs: &Inputs,
    opts: &CompileOptions,
    split: Split,
    ids: Option<&BTreeSet<&str>>,
) -> Result<Vec<CompiledExample>, CompileError> {
    let keep = |id: &str| ids.is_none_or(|s| s.contains(id));
    let c = &inputs.compiler;
    let mut out = Vec::new();
    match &inputs.data {
        TaskData::Ic(d) => {
            for e in d.split(split).iter().filter(|e| keep(&e.id)) {
                out.push(c.compile_ic(&e.id, &e.utterance, &e.intent, &inputs.ontology, &e.domain, opts)?);
            }
        }
        TaskData::Dst { train, validation, test } => {
            let data = match split {
                Split::Train => train,
                Split::Validation => validation,
                Split::Test => test,
            };
            let slots = inputs.slots();
            for dialog in data.dialogs.iter().filter(|d| keep(&d.id)) {
                for t in dialog.turn_records() {
                    out.extend(c.compile_dst(t.dialog_id, &t.history, t.state, &slots, opts)?);
                }
            }
        }
        TaskData::Nlg { train, validation, test } => {
            let data = match split {
                Split::Train => train,
                Split::Validation => validation,
                Split::Test => test,
            };
            let repr = manifest.nlg_repr.unwrap_or(NlgRepr::Naive);
            for item in data.items.iter().filter(|i| keep(&i.dialog_id)) {
                out.push(c.compile_nlg(&item.id, &item.frames, &item.reference, repr, inputs.table.as_ref(), opts)?);
            }
        }
    }
    Ok(out)
}

fn compile_cell(
    manifest: &Manifest,
    inputs: &Inputs,
    cell: &CellSpec,
    split: &SplitManifest,
    cell_dir: &Path,
) -> Result<BTreeMap<String, FileInfo>, RunError> {
    let opts = cell.options();
    let train: BTreeSet<&str> = split.train.iter().map(String::as_str).collect();
    let validation: BTreeSet<&str> = split.validation.iter().map(String::as_str).collect();
    let mut files = BTreeMap::new();
    let mut rendered = Vec::new();
    for (s, ids) in [(Split::Train, Some(&train)), (Split::Validation, Some(&validation)), (Split::Test, None)] {
        let examples = compile_split(manifest, inputs, &opts, s, ids)?;
        let text = to_jsonl(&examples);
        let name = format!("{s}.jsonl");
        files.insert(
            s.to_string(),
            FileInfo { path: name.clone(), records: examples.len(), sha256: sha256_hex(text.as_bytes()) },
        );
        rendered.push((name, text));
    }
    // nothing is written until every split compiled
    for (name, text) in rendered {
        write(&cell_dir.join(name), &text)?;
    }
    Ok(files)
}

/// Result of [`run_compile`].
#[derive(Debug, Clone)]
pub struct CompileReport {
    pub output_dir: PathBuf,
    pub summary: RunSummary,
}

/// Samples every seed, compiles every cell (in parallel), and writes split
/// manifests, cell directories and `run.json` under `output_dir`. Cell
/// failures are recorded, not returned; inspect `summary.failed()`.
pub fn run_compile(manifest: &Manifest, output_dir: &Path) -> Result<CompileReport, RunError> {
    manifest.validate()?;
    let inputs = load_inputs(manifest)?;
    run_compile_with(manifest, &inputs, output_dir)
}

pub fn run_compile_with(manifest: &Manifest, inputs: &Inputs, output_dir: &Path) -> Result<CompileReport, RunError> {
    let splits: BTreeMap<u64, Result<SplitManifest, String>> = manifest
        .seeds
        .par_iter()
        .map(|&seed| (seed, sample_seed(manifest, inputs, seed).map_err(|e| format!("seed {seed}: {e}"))))
        .collect();
    for (seed, split) in &splits {
        if let Ok(s) = split {
            write(&output_dir.join(split_manifest_path(*seed)), &s.to_jsonl())?;
        }
    }

    let cells = plan_cells(manifest, &inputs.compiler.catalog);
    let labelset = if manifest.task == Task::Ic { inputs.labelset() } else { Vec::new() };
    let outcomes: Vec<CellOutcome> = cells
        .par_iter()
        .map(|cell| {
            let cell_id = cell.id();
            let cell_dir = output_dir.join(&cell_id);
            let result = match &splits[&cell.seed] {
                Ok(split) => compile_cell(manifest, inputs, cell, split, &cell_dir).map_err(|e| e.to_string()),
                Err(e) => Err(e.clone()),
            };
            let (status, error, files) = match result {
                Ok(files) => (CellStatus::Ok, None, files),
                Err(e) => (CellStatus::Failed, Some(e), BTreeMap::new()),
            };
            let descriptor = CellDescriptor {
                cell_id: cell_id.clone(),
                status,
                error: error.clone(),
                task: manifest.task,
                mode: cell.mode,
                variant: cell.variant(),
                prompt: cell.prompt.clone(),
                ablation: cell.mask.label(),
                mask: cell.mask,
                seed: cell.seed,
                nlg_repr: manifest.nlg_repr.filter(|_| manifest.task == Task::Nlg),
                dataset_hash: inputs.dataset_hash.clone(),
                split_manifest: split_manifest_path(cell.seed),
                labelset: labelset.clone(),
                files,
            };
            let json = serde_json::to_string_pretty(&descriptor).expect("descriptor serializes") + "\n";
            let (status, error) = match write(&cell_dir.join(CELL_FILE), &json) {
                Ok(()) => (status, error),
                Err(e) => (CellStatus::Failed, Some(e.to_string())),
            };
            CellOutcome { cell_id, status, error }
        })
        .collect();

    let summary = RunSummary {
        task: manifest.task,
        dataset_hash: inputs.dataset_hash.clone(),
        plan: manifest.plan.clone(),
        seeds: manifest.seeds.clone(),
        modes: manifest.modes.clone(),
        variants: manifest.variants(&inputs.compiler.catalog).iter().map(PromptChoice::label).collect(),
        ablations: manifest.masks().iter().map(AblationMask::label).collect(),
        nlg_repr: manifest.nlg_repr,
        prng: PRNG.into(),
        bleu_variant: BLEU_VARIANT.into(),
        cells: outcomes,
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    write(&output_dir.join(RUN_FILE), &json)?;
    Ok(CompileReport { output_dir: output_dir.to_path_buf(), summary })
}
