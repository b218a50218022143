//! Compile task-oriented dialog datasets into standard, prompted and
//! instruction-augmented seq2seq examples, sample few-shot splits, and score
//! model predictions.
//!
//! The crate is split along the pipeline:
//!
//! - [`schema`]: ontology, dialog, and compiled-example types.
//! - [`semantic`]: dialog-act parsing and the naive / template-guided renderings.
//! - [`compiler`]: STD / PE / CINS input assembly, prompt catalog, ablations.
//! - [`ingest`]: dataset adapters for intent, state-tracking and NLG corpora.
//! - [`sampler`]: seeded few-shot and matched-validation splits.
//! - [`metrics`]: accuracy, joint goal accuracy, slot error rate, BLEU.
//! - [`experiment`]: manifest-driven compile / score / report runs.

pub mod compiler;
pub mod experiment;
pub mod ingest;
pub mod metrics;
pub mod sampler;
pub mod schema;
pub mod semantic;

pub use compiler::{
    assemble, variant_matrix, CompileError, CompileOptions, Compiler, PromptCatalog, PromptChoice,
    TemplateLibrary,
};
pub use schema::{
    normalize_label, validate_ontology, AblationMask, CompiledExample, DialogActFrame,
    DialogHistory, DialogState, DomainSpec, InstructionTemplate, IntentSpec, Mode, NlgRepr,
    Ontology, PromptExpression, SlotKey, SlotKind, SlotSpec, Speaker, Task, Turn, NONE_VALUE,
};
pub use semantic::{check_coverage, parse_acts, render_naive, render_t2g2, TemplateTable};
pub use experiment::{run_compile, run_report, run_score, Manifest, Report, RunSummary};
pub use ingest::Split;
pub use metrics::{corpus_bleu, intent_accuracy, joint_goal_accuracy, slot_error_rate, RunScores};
pub use sampler::{SamplePlan, SplitManifest, Strategy};
