//! Builds STD, PE and CINS model inputs for intent classification, dialog
//! state tracking and NLG.
//!
//! A compiled input is a sequence of segments in the fixed order
//! Input, Definition, Constraint, Prompt. Each present segment starts with its
//! identifier (`Input:`, ...) and a space; segments are joined by ` [SEP] `.
//! STD inputs are the raw text with no identifiers at all.

mod catalog;
mod templates;

use std::collections::BTreeMap;

use thiserror::Error;

pub use catalog::{variant_matrix, PromptCatalog, PromptChoice, PromptEntry, QUESTION_PREFIX};
pub use templates::{fill, DstTemplates, IcTemplates, NlgTemplates, TemplateLibrary};

use crate::schema::{
    normalize_label, AblationMask, CompiledExample, DialogActFrame, DialogHistory, DialogState,
    InstructionTemplate, Mode, NlgRepr, Ontology, SlotKind, SlotSpec, Task,
};
use crate::semantic::{render_naive, render_t2g2, RenderError, TemplateTable};

pub const SEP: &str = " [SEP] ";

/// Segment identifiers in emission order.
pub const SEGMENT_IDS: [&str; 4] = ["Input:", "Definition:", "Constraint:", "Prompt:"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompileError {
    #[error("input text is empty")]
    EmptyInput,
    #[error("unknown domain `{0}`")]
    UnknownDomain(String),
    #[error("domain `{0}` has no intents")]
    NoIntents(String),
    #[error("intent `{intent}` is not in domain `{domain}`")]
    UnknownIntent { domain: String, intent: String },
    #[error("intent `{0}` has no description")]
    MissingDescription(String),
    #[error("no slots to compile")]
    EmptySlots,
    #[error("{0} mode needs a prompt choice")]
    PromptRequired(Mode),
    #[error("no {task} prompt for root `{root}` ({expression})")]
    MissingPrompt { task: Task, root: String, expression: String },
    #[error("unknown placeholder `{{{0}}}`")]
    UnknownPlaceholder(String),
    #[error("T2G2 representation needs a template table")]
    MissingTemplateTable,
    #[error("inconsistent instruction template: {0}")]
    InconsistentTemplate(String),
    #[error("prompt catalog: {0}")]
    Catalog(String),
    #[error("instruction templates: {0}")]
    Templates(String),
    #[error(transparent)]
    Render(#[from] RenderError),
}

/// Joins the present segments of `template` around `input_text`.
pub fn assemble(
    input_text: &str,
    template: &InstructionTemplate,
    mask: &AblationMask,
) -> Result<String, CompileError> {
    if input_text.trim().is_empty() {
        return Err(CompileError::EmptyInput);
    }
    template.check(mask).map_err(CompileError::InconsistentTemplate)?;
    if template.mode == Mode::Std {
        return Ok(input_text.to_string());
    }
    let parts = [
        (SEGMENT_IDS[0], input_text, false),
        (SEGMENT_IDS[1], template.definition.as_str(), mask.drop_definition),
        (SEGMENT_IDS[2], template.constraint.as_str(), mask.drop_constraint),
        (SEGMENT_IDS[3], template.prompt.as_str(), mask.drop_prompt),
    ];
    let segments: Vec<String> = parts
        .into_iter()
        .filter(|(_, text, dropped)| !dropped && !text.trim().is_empty())
        .map(|(id, text, _)| format!("{id} {text}"))
        .collect();
    Ok(segments.join(SEP))
}

/// Splits a compiled PE/CINS input back into `(identifier, content)` pairs.
/// Segments without a known identifier get `None`.
pub fn split_segments(compiled: &str) -> Vec<(Option<&'static str>, &str)> {
    compiled
        .split(SEP)
        .map(|seg| {
            for id in SEGMENT_IDS {
                if let Some(rest) = seg.strip_prefix(id).and_then(|r| r.strip_prefix(' ')) {
                    return (Some(id), rest);
                }
            }
            (None, seg)
        })
        .collect()
}

/// Mode, prompt and ablation for one compilation. `prompt` is ignored in STD
/// mode and `mask` outside CINS mode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompileOptions {
    pub mode: Mode,
    pub prompt: Option<PromptChoice>,
    pub mask: AblationMask,
}

impl CompileOptions {
    pub fn standard() -> Self {
        Self { mode: Mode::Std, prompt: None, mask: AblationMask::NONE }
    }

    pub fn prompted(mode: Mode, prompt: PromptChoice) -> Self {
        Self { mode, prompt: Some(prompt), mask: AblationMask::NONE }
    }

    pub fn with_mask(mut self, mask: AblationMask) -> Self {
        self.mask = mask;
        self
    }

    fn effective_mask(&self) -> AblationMask {
        if self.mode == Mode::Cins {
            self.mask
        } else {
            AblationMask::NONE
        }
    }
}

/// Compiles dataset records into [`CompiledExample`]s using a template
/// library and prompt catalog. Stateless; share freely across threads.
#[derive(Debug, Clone, Default)]
pub struct Compiler {
    pub templates: TemplateLibrary,
    pub catalog: PromptCatalog,
}

type Vars<'a> = BTreeMap<&'a str, String>;

impl Compiler {
    pub fn new(templates: TemplateLibrary, catalog: PromptCatalog) -> Self {
        Self { templates, catalog }
    }

    /// Resolves the instruction skeleton for `task` under `opts`, with
    /// placeholders still in place.
    pub fn instruction(
        &self,
        task: Task,
        opts: &CompileOptions,
        nlg_repr: Option<NlgRepr>,
        slot_kind: Option<SlotKind>,
    ) -> Result<InstructionTemplate, CompileError> {
        let mut t = InstructionTemplate::standard(task);
        t.mode = opts.mode;
        t.nlg_repr = nlg_repr;
        if opts.mode == Mode::Std {
            return Ok(t);
        }
        let choice = opts.prompt.as_ref().ok_or(CompileError::PromptRequired(opts.mode))?;
        let entry = self.catalog.get(task, choice).ok_or_else(|| CompileError::MissingPrompt {
            task,
            root: choice.root.clone(),
            expression: choice.expression.to_string(),
        })?;
        t.prompt_root = choice.root.clone();
        t.prompt_expression = Some(choice.expression);
        t.prompt = match (slot_kind, &entry.whether_text) {
            (Some(SlotKind::Boolean), Some(w)) => w.clone(),
            _ => entry.text.clone(),
        };
        if opts.mode == Mode::Pe {
            return Ok(t);
        }
        let lib = &self.templates;
        (t.definition, t.constraint) = match task {
            Task::Ic => (lib.ic.definition.clone(), lib.ic.constraint.clone()),
            Task::Dst => {
                let constraint = match slot_kind {
                    Some(SlotKind::Categorical | SlotKind::Boolean) => &lib.dst.constraint_categorical,
                    _ => &lib.dst.constraint_open,
                };
                (lib.dst.definition.clone(), constraint.clone())
            }
            Task::Nlg => {
                let definition = match nlg_repr.unwrap_or(NlgRepr::Naive) {
                    NlgRepr::Naive => &lib.nlg.definition_naive,
                    NlgRepr::T2g2 => &lib.nlg.definition_t2g2,
                };
                (definition.clone(), lib.nlg.constraint.clone())
            }
        };
        Ok(t)
    }

    fn render(
        &self,
        input: &str,
        skeleton: InstructionTemplate,
        vars: &Vars<'_>,
        mask: &AblationMask,
    ) -> Result<(String, String), CompileError> {
        // dropped segments are never rendered, so they cannot fail
        let keep = |text: &str, dropped: bool| if dropped { Ok(text.to_string()) } else { fill(text, vars) };
        let filled = InstructionTemplate {
            definition: keep(&skeleton.definition, mask.drop_definition)?,
            constraint: keep(&skeleton.constraint, mask.drop_constraint)?,
            prompt: keep(&skeleton.prompt, mask.drop_prompt)?,
            ..skeleton
        };
        let text = assemble(input, &filled, mask)?;
        Ok((text, filled.template_id()))
    }

    fn base_meta(opts: &CompileOptions, template_id: String) -> BTreeMap<String, String> {
        let mut meta = BTreeMap::new();
        meta.insert("mode".into(), opts.mode.to_string());
        meta.insert("template".into(), template_id);
        if opts.mode == Mode::Cins {
            meta.insert("ablation".into(), opts.mask.label());
        }
        meta
    }

    /// Intent classification: the utterance, with the domain's candidate
    /// intents (and descriptions) as the constraint.
    pub fn compile_ic(
        &self,
        id: &str,
        utterance: &str,
        gold_intent: &str,
        ontology: &Ontology,
        domain: &str,
        opts: &CompileOptions,
    ) -> Result<CompiledExample, CompileError> {
        if utterance.trim().is_empty() {
            return Err(CompileError::EmptyInput);
        }
        let domain_spec = ontology
            .domain(domain)
            .ok_or_else(|| CompileError::UnknownDomain(domain.to_string()))?;
        if domain_spec.intents.is_empty() {
            return Err(CompileError::NoIntents(domain_spec.name.clone()));
        }
        let gold = normalize_label(gold_intent);
        let intent = domain_spec
            .intents
            .iter()
            .find(|i| normalize_label(&i.name) == gold)
            .ok_or_else(|| CompileError::UnknownIntent {
                domain: domain_spec.name.clone(),
                intent: gold_intent.to_string(),
            })?;

        let mask = opts.effective_mask();
        let mut pieces = Vec::new();
        // the intent list only appears in a CINS constraint
        let listed = if opts.mode == Mode::Cins && !mask.drop_constraint { domain_spec.intents.as_slice() } else { &[] };
        for i in listed {
            if mask.drop_descriptions {
                pieces.push(i.name.clone());
            } else if i.description.trim().is_empty() {
                return Err(CompileError::MissingDescription(i.name.clone()));
            } else {
                pieces.push(format!("{}: {}", i.name, i.description));
            }
        }
        let vars: Vars = [
            ("intents", pieces.join(", ")),
            ("domain", domain_spec.name.clone()),
        ]
        .into_iter()
        .collect();

        let skeleton = self.instruction(Task::Ic, opts, None, None)?;
        let (input_text, template_id) = self.render(utterance, skeleton, &vars, &mask)?;
        let mut meta = Self::base_meta(opts, template_id);
        meta.insert("domain".into(), domain_spec.name.clone());
        meta.insert("label".into(), normalize_label(&intent.name));
        Ok(CompiledExample {
            id: id.to_string(),
            task: Task::Ic,
            input_text,
            target_text: intent.name.clone(),
            meta,
        })
    }

    /// Dialog state tracking: one example per slot, each asking for that
    /// slot's value given the history. Targets are the gold value or `none`.
    pub fn compile_dst(
        &self,
        dialog_id: &str,
        history: &DialogHistory,
        gold: &DialogState,
        slots: &[SlotSpec],
        opts: &CompileOptions,
    ) -> Result<Vec<CompiledExample>, CompileError> {
        if slots.is_empty() {
            return Err(CompileError::EmptySlots);
        }
        let mask = opts.effective_mask();
        let flat = history.flatten();
        let turn = history.turn_index();
        let mut out = Vec::with_capacity(slots.len());
        for slot in slots {
            let description = if mask.drop_descriptions || slot.description.trim().is_empty() {
                slot.naive_description()
            } else {
                slot.description.clone()
            };
            let vars: Vars = [
                ("history", flat.clone()),
                ("slot", slot.naive_description()),
                ("slot_description", description),
                ("candidates", slot.value_space().join(", ")),
                ("domain", slot.domain.clone()),
            ]
            .into_iter()
            .collect();
            let input = if opts.mode == Mode::Std {
                fill(&self.templates.dst.std_input, &vars)?
            } else {
                flat.clone()
            };
            let skeleton = self.instruction(Task::Dst, opts, None, Some(slot.kind))?;
            let (input_text, template_id) = self.render(&input, skeleton, &vars, &mask)?;
            let key = slot.key();
            let mut meta = Self::base_meta(opts, template_id);
            meta.insert("dialog_id".into(), dialog_id.to_string());
            meta.insert("turn".into(), turn.to_string());
            meta.insert("domain".into(), key.domain.clone());
            meta.insert("slot".into(), key.slot.clone());
            out.push(CompiledExample {
                id: format!("{dialog_id}:t{turn}:{key}"),
                task: Task::Dst,
                input_text,
                target_text: gold.value(&key).to_string(),
                meta,
            });
        }
        Ok(out)
    }

    /// NLG: the naive or template-guided rendering of `frames` as input and
    /// the reference utterance as target.
    pub fn compile_nlg(
        &self,
        id: &str,
        frames: &[DialogActFrame],
        reference: &str,
        repr: NlgRepr,
        table: Option<&TemplateTable>,
        opts: &CompileOptions,
    ) -> Result<CompiledExample, CompileError> {
        let naive = render_naive(frames)?;
        let input = match repr {
            NlgRepr::Naive => naive.clone(),
            NlgRepr::T2g2 => render_t2g2(frames, table.ok_or(CompileError::MissingTemplateTable)?)?,
        };
        let mask = opts.effective_mask();
        let skeleton = self.instruction(Task::Nlg, opts, Some(repr), None)?;
        let (input_text, template_id) = self.render(&input, skeleton, &Vars::new(), &mask)?;
        let mut meta = Self::base_meta(opts, template_id);
        meta.insert("acts".into(), naive);
        meta.insert("repr".into(), repr.to_string());
        Ok(CompiledExample {
            id: id.to_string(),
            task: Task::Nlg,
            input_text,
            target_text: reference.to_string(),
            meta,
        })
    }
}
