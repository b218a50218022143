//! Dataset adapters. Each family has one or two on-disk layouts that are
//! normalized into the shared in-memory types:
//!
//! | family | layout | notes |
//! |--------|--------|-------|
//! | intents | `.jsonl`: `{"split", "text", "intent", "domain"?, "id"?}` per line | domain inferred from the ontology when absent |
//! | intents | `.json`: `{"train": [[text, intent], ...], "val": ..., "test": ...}` | OOS-style; `oos_*` keys are skipped |
//! | DST | `.jsonl`: `{"dialogue_id", "turns": [{"speaker", "utterance", "state"?}]}` | `state` on user turns: `{domain: {slot: value}}` |
//! | DST | `.json`: `{id: {"log": [{"text", "metadata"}]}}` | MultiWOZ style; user state read from the following system turn |
//! | NLG | `.jsonl`: `{"id"?, "dialog_id", "domain", "acts", "reference"}` | `acts` in dialog-act syntax |
//!
//! A file either loads completely or fails with a located error. The only
//! rows dropped silently are those outside the domain filter and the
//! out-of-scope intent, and both are counted in [`IngestStats`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::schema::{
    check_alternation, normalize_label, DialogActFrame, DialogHistory, DialogState, Ontology,
    SchemaError, SlotKey, Speaker, Turn,
};
use crate::semantic::{check_coverage, parse_acts, ParseError, TemplateTable};

/// Label of the out-of-scope intent, excluded from in-domain experiments.
pub const OUT_OF_SCOPE_INTENT: &str = "oos";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("reading {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{location}: {message}")]
    Malformed { location: String, message: String },
    #[error("{location}: unknown intent label `{label}`")]
    UnknownIntent { location: String, label: String },
    #[error("{location}: intent `{label}` belongs to several domains ({domains}); give the domain explicitly")]
    AmbiguousIntent { location: String, label: String, domains: String },
    #[error("{location}: slot {key} is not in the ontology")]
    UnknownSlot { location: String, key: SlotKey },
    #[error("dialog `{dialog}`: {source}")]
    History { dialog: String, source: SchemaError },
    #[error("item `{id}` (line {line}): {source}")]
    Acts { id: String, line: usize, source: ParseError },
    #[error("item `{id}`: no template for {}", fmt_pairs(missing))]
    Coverage { id: String, missing: Vec<(String, Option<String>)> },
}

fn fmt_pairs(pairs: &[(String, Option<String>)]) -> String {
    pairs
        .iter()
        .map(|(a, s)| format!("({a}, {})", s.as_deref().unwrap_or("-")))
        .collect::<Vec<_>>()
        .join(", ")
}

fn malformed(location: impl Into<String>, message: impl fmt::Display) -> IngestError {
    IngestError::Malformed { location: location.into(), message: message.to_string() }
}

fn read(path: &Path) -> Result<String, IngestError> {
    std::fs::read_to_string(path).map_err(|source| IngestError::Io { path: path.to_path_buf(), source })
}

fn is_jsonl(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("jsonl"))
}

/// Non-blank lines with their 1-based line numbers.
fn jsonl_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    #[serde(alias = "val", alias = "dev")]
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }

    fn parse(s: &str) -> Option<Split> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Some(Split::Train),
            "validation" | "val" | "dev" => Some(Split::Validation),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Split::parse(s).ok_or_else(|| format!("unknown split `{s}` (expected train, validation or test)"))
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Row counts observed while loading.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub rows_read: usize,
    pub kept: usize,
    pub filtered_by_domain: usize,
    pub out_of_scope: usize,
    pub state_entries_dropped: usize,
}

/// Normalized allow-list of domains. An empty filter admits nothing.
#[derive(Debug, Clone, Default)]
pub struct DomainFilter(BTreeSet<String>);

impl DomainFilter {
    pub fn new<S: AsRef<str>>(domains: &[S]) -> Self {
        Self(domains.iter().map(|d| normalize_label(d.as_ref())).collect())
    }

    /// Every domain of the ontology.
    pub fn all(ontology: &Ontology) -> Self {
        Self(ontology.domains.iter().map(|d| normalize_label(&d.name)).collect())
    }

    pub fn admits(&self, domain: &str) -> bool {
        self.0.contains(&normalize_label(domain))
    }
}

// ---------------------------------------------------------------------------
// Intents
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntentExample {
    pub id: String,
    pub utterance: String,
    pub intent: String,
    pub domain: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntentDataset {
    pub splits: BTreeMap<Split, Vec<IntentExample>>,
    pub stats: IngestStats,
}

impl IntentDataset {
    pub fn split(&self, split: Split) -> &[IntentExample] {
        self.splits.get(&split).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.splits.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Distinct intents across all splits, sorted.
    pub fn intents(&self) -> BTreeSet<&str> {
        self.splits.values().flatten().map(|e| e.intent.as_str()).collect()
    }
}

#[derive(Deserialize)]
struct IntentRow {
    #[serde(default)]
    id: Option<String>,
    split: String,
    text: String,
    intent: String,
    #[serde(default)]
    domain: Option<String>,
}

struct IntentBuilder<'a> {
    ontology: &'a Ontology,
    filter: &'a DomainFilter,
    data: IntentDataset,
    seen_ids: BTreeSet<String>,
}

impl IntentBuilder<'_> {
    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        location: String,
        split: Split,
        id: String,
        text: String,
        label: String,
        domain: Option<String>,
    ) -> Result<(), IngestError> {
        self.data.stats.rows_read += 1;
        if normalize_label(&label) == OUT_OF_SCOPE_INTENT {
            self.data.stats.out_of_scope += 1;
            return Ok(());
        }
        if text.trim().is_empty() {
            return Err(malformed(location, "empty utterance"));
        }
        let (domain, intent) = match domain {
            Some(d) => {
                let spec = self
                    .ontology
                    .domain(&d)
                    .ok_or_else(|| malformed(location.clone(), format!("unknown domain `{d}`")))?;
                let wanted = normalize_label(&label);
                let intent = spec
                    .intents
                    .iter()
                    .find(|i| normalize_label(&i.name) == wanted)
                    .ok_or_else(|| IngestError::UnknownIntent { location: location.clone(), label: label.clone() })?;
                (spec.name.clone(), intent.name.clone())
            }
            None => {
                let candidates = self.ontology.domains_for_intent(&label);
                match candidates.as_slice() {
                    [] => return Err(IngestError::UnknownIntent { location, label }),
                    [spec] => {
                        let wanted = normalize_label(&label);
                        let intent = spec.intents.iter().find(|i| normalize_label(&i.name) == wanted).unwrap();
                        (spec.name.clone(), intent.name.clone())
                    }
                    many => {
                        let domains = many.iter().map(|d| d.name.as_str()).collect::<Vec<_>>().join(", ");
                        return Err(IngestError::AmbiguousIntent { location, label, domains });
                    }
                }
            }
        };
        if !self.filter.admits(&domain) {
            self.data.stats.filtered_by_domain += 1;
            return Ok(());
        }
        if !self.seen_ids.insert(id.clone()) {
            return Err(malformed(location, format!("duplicate id `{id}`")));
        }
        self.data.stats.kept += 1;
        self.data.splits.entry(split).or_default().push(IntentExample { id, utterance: text, intent, domain });
        Ok(())
    }
}

/// Loads an intent dataset, keeping rows whose domain passes `domain_filter`.
pub fn load_intent_dataset<S: AsRef<str>>(
    path: &Path,
    ontology: &Ontology,
    domain_filter: &[S],
) -> Result<IntentDataset, IngestError> {
    let text = read(path)?;
    let filter = DomainFilter::new(domain_filter);
    if is_jsonl(path) {
        parse_intent_jsonl(&text, ontology, &filter)
    } else {
        parse_intent_oos(&text, ontology, &filter)
    }
}

pub fn parse_intent_jsonl(
    text: &str,
    ontology: &Ontology,
    filter: &DomainFilter,
) -> Result<IntentDataset, IngestError> {
    let mut b = IntentBuilder { ontology, filter, data: IntentDataset::default(), seen_ids: BTreeSet::new() };
    let mut counters: BTreeMap<Split, usize> = BTreeMap::new();
    for (line, raw) in jsonl_lines(text) {
        let location = format!("line {line}");
        let row: IntentRow = serde_json::from_str(raw).map_err(|e| malformed(location.clone(), e))?;
        let split = Split::parse(&row.split)
            .ok_or_else(|| malformed(location.clone(), format!("unknown split `{}`", row.split)))?;
        let n = counters.entry(split).or_default();
        let id = row.id.unwrap_or_else(|| format!("{split}-{n:06}"));
        *n += 1;
        b.push(location, split, id, row.text, row.intent, row.domain)?;
    }
    Ok(b.data)
}

/// OOS-style object: split keys map to `[utterance, intent]` pairs.
pub fn parse_intent_oos(
    text: &str,
    ontology: &Ontology,
    filter: &DomainFilter,
) -> Result<IntentDataset, IngestError> {
    let root: BTreeMap<String, Vec<Value>> =
        serde_json::from_str(text).map_err(|e| malformed("file", e))?;
    let mut b = IntentBuilder { ontology, filter, data: IntentDataset::default(), seen_ids: BTreeSet::new() };
    for (key, rows) in &root {
        if key.starts_with("oos_") {
            b.data.stats.rows_read += rows.len();
            b.data.stats.out_of_scope += rows.len();
            continue;
        }
        let split = Split::parse(key).ok_or_else(|| malformed(key.clone(), "unknown split key"))?;
        for (i, row) in rows.iter().enumerate() {
            let location = format!("{key}[{i}]");
            let pair = row
                .as_array()
                .filter(|a| a.len() == 2)
                .and_then(|a| Some((a[0].as_str()?.to_string(), a[1].as_str()?.to_string())))
                .ok_or_else(|| malformed(location.clone(), "expected [utterance, intent]"))?;
            let id = format!("{split}-{i:06}");
            b.push(location, split, id, pair.0, pair.1, None)?;
        }
    }
    Ok(b.data)
}

// ---------------------------------------------------------------------------
// Dialog state tracking
// ---------------------------------------------------------------------------

/// A dialog with one gold state per user turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DstDialog {
    pub id: String,
    pub turns: Vec<Turn>,
    pub states: Vec<DialogState>,
}

/// One `(C_t, gold state)` pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DstTurn<'a> {
    pub dialog_id: &'a str,
    pub history: DialogHistory,
    pub state: &'a DialogState,
}

impl DstDialog {
    pub fn user_turns(&self) -> usize {
        self.states.len()
    }

    pub fn turn_records(&self) -> Vec<DstTurn<'_>> {
        self.states
            .iter()
            .enumerate()
            .map(|(t, state)| DstTurn {
                dialog_id: &self.id,
                // alternation was checked at load time
                history: DialogHistory::new(self.turns[..2 * t + 1].to_vec()).expect("validated history"),
                state,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DstDataset {
    pub dialogs: Vec<DstDialog>,
    pub stats: IngestStats,
}

impl DstDataset {
    pub fn turn_records(&self) -> Vec<DstTurn<'_>> {
        self.dialogs.iter().flat_map(DstDialog::turn_records).collect()
    }

    pub fn dialog(&self, id: &str) -> Option<&DstDialog> {
        self.dialogs.iter().find(|d| d.id == id)
    }
}

#[derive(Deserialize)]
struct DstRow {
    dialogue_id: String,
    turns: Vec<DstRowTurn>,
}

#[derive(Deserialize)]
struct DstRowTurn {
    speaker: Speaker,
    utterance: String,
    #[serde(default)]
    state: Option<BTreeMap<String, BTreeMap<String, String>>>,
}

struct DstBuilder<'a> {
    ontology: &'a Ontology,
    filter: &'a DomainFilter,
    data: DstDataset,
}

impl DstBuilder<'_> {
    /// Values meaning "not mentioned" in common annotations.
    fn is_unset(value: &str) -> bool {
        matches!(normalize_label(value).as_str(), "" | "not mentioned" | "none")
    }

    fn state(
        &mut self,
        location: &str,
        raw: impl IntoIterator<Item = (String, String, String)>,
    ) -> Result<DialogState, IngestError> {
        let mut state = DialogState::new();
        for (domain, slot, value) in raw {
            if Self::is_unset(&value) {
                continue;
            }
            if !self.filter.admits(&domain) {
                self.data.stats.state_entries_dropped += 1;
                continue;
            }
            let key = SlotKey::new(domain, slot);
            let spec = self
                .ontology
                .slot(&key)
                .ok_or_else(|| IngestError::UnknownSlot { location: location.to_string(), key: key.clone() })?;
            state.insert(spec.key(), value);
        }
        Ok(state)
    }

    fn finish(&mut self, id: String, turns: Vec<Turn>, states: Vec<DialogState>) -> Result<(), IngestError> {
        check_alternation(&turns).map_err(|source| IngestError::History { dialog: id.clone(), source })?;
        if self.data.dialogs.iter().any(|d| d.id == id) {
            return Err(malformed(format!("dialog `{id}`"), "duplicate dialog id"));
        }
        self.data.stats.rows_read += 1;
        self.data.stats.kept += 1;
        self.data.dialogs.push(DstDialog { id, turns, states });
        Ok(())
    }
}

pub fn load_dst_dataset<S: AsRef<str>>(
    path: &Path,
    ontology: &Ontology,
    domain_filter: &[S],
) -> Result<DstDataset, IngestError> {
    let text = read(path)?;
    let filter = DomainFilter::new(domain_filter);
    if is_jsonl(path) {
        parse_dst_jsonl(&text, ontology, &filter)
    } else {
        parse_dst_multiwoz(&text, ontology, &filter)
    }
}

pub fn parse_dst_jsonl(text: &str, ontology: &Ontology, filter: &DomainFilter) -> Result<DstDataset, IngestError> {
    let mut b = DstBuilder { ontology, filter, data: DstDataset::default() };
    for (line, raw) in jsonl_lines(text) {
        let row: DstRow = serde_json::from_str(raw).map_err(|e| malformed(format!("line {line}"), e))?;
        let mut turns = Vec::with_capacity(row.turns.len());
        let mut states = Vec::new();
        for (i, t) in row.turns.into_iter().enumerate() {
            if t.speaker == Speaker::User {
                let location = format!("line {line}, dialog `{}` turn {i}", row.dialogue_id);
                let flat = t
                    .state
                    .unwrap_or_default()
                    .into_iter()
                    .flat_map(|(d, slots)| slots.into_iter().map(move |(s, v)| (d.clone(), s, v)));
                states.push(b.state(&location, flat)?);
            } else if t.state.is_some() {
                return Err(malformed(format!("line {line}, turn {i}"), "state given on a system turn"));
            }
            turns.push(Turn { speaker: t.speaker, utterance: t.utterance });
        }
        b.finish(row.dialogue_id, turns, states)?;
    }
    Ok(b.data)
}

/// MultiWOZ `data.json` layout. Even log entries are user turns; the belief
/// state after user turn `t` sits in the metadata of the following system
/// turn, with `semi` slots under their own names and `book` slots as
/// `book <slot>`.
pub fn parse_dst_multiwoz(text: &str, ontology: &Ontology, filter: &DomainFilter) -> Result<DstDataset, IngestError> {
    let root: BTreeMap<String, Value> = serde_json::from_str(text).map_err(|e| malformed("file", e))?;
    let mut b = DstBuilder { ontology, filter, data: DstDataset::default() };
    for (id, dialog) in root {
        let log = dialog
            .get("log")
            .and_then(Value::as_array)
            .ok_or_else(|| malformed(format!("dialog `{id}`"), "missing `log` array"))?;
        let mut turns = Vec::with_capacity(log.len());
        let mut states = Vec::new();
        for (i, entry) in log.iter().enumerate() {
            let location = format!("dialog `{id}` log[{i}]");
            let utterance = entry
                .get("text")
                .and_then(Value::as_str)
                .ok_or_else(|| malformed(location.clone(), "missing `text`"))?;
            if i % 2 == 0 {
                turns.push(Turn::user(utterance));
                let meta = log
                    .get(i + 1)
                    .and_then(|s| s.get("metadata"))
                    .and_then(Value::as_object)
                    .ok_or_else(|| malformed(location.clone(), "user turn has no following system metadata"))?;
                let mut raw = Vec::new();
                for (domain, parts) in meta {
                    for (part, prefix) in [("semi", ""), ("book", "book ")] {
                        let Some(slots) = parts.get(part).and_then(Value::as_object) else { continue };
                        for (slot, value) in slots {
                            if let Some(v) = value.as_str() {
                                raw.push((domain.clone(), format!("{prefix}{slot}"), v.to_string()));
                            }
                        }
                    }
                }
                states.push(b.state(&location, raw)?);
            } else {
                turns.push(Turn::system(utterance));
            }
        }
        b.finish(id, turns, states)?;
    }
    Ok(b.data)
}

// ---------------------------------------------------------------------------
// NLG
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NlgItem {
    pub id: String,
    pub frames: Vec<DialogActFrame>,
    pub reference: String,
    pub domain: String,
    pub dialog_id: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NlgDataset {
    pub items: Vec<NlgItem>,
    pub stats: IngestStats,
}

impl NlgDataset {
    /// Every `(act, slot)` pair present, `slot = None` for slot-less acts.
    pub fn act_slot_pairs(&self) -> BTreeSet<(String, Option<String>)> {
        self.items.iter().flat_map(|i| i.frames.iter().flat_map(DialogActFrame::template_keys)).collect()
    }
}

#[derive(Deserialize)]
struct NlgRow {
    #[serde(default)]
    id: Option<String>,
    dialog_id: String,
    #[serde(alias = "service")]
    domain: String,
    acts: String,
    reference: String,
}

/// Loads NLG items; when `table` is given every item must be renderable with it.
pub fn load_nlg_dataset(path: &Path, table: Option<&TemplateTable>) -> Result<NlgDataset, IngestError> {
    parse_nlg_jsonl(&read(path)?, table)
}

pub fn parse_nlg_jsonl(text: &str, table: Option<&TemplateTable>) -> Result<NlgDataset, IngestError> {
    let mut data = NlgDataset::default();
    let mut seen = BTreeSet::new();
    for (line, raw) in jsonl_lines(text) {
        let row: NlgRow = serde_json::from_str(raw).map_err(|e| malformed(format!("line {line}"), e))?;
        let id = row.id.unwrap_or_else(|| format!("{}-{line}", row.dialog_id));
        let frames = parse_acts(&row.acts).map_err(|source| IngestError::Acts { id: id.clone(), line, source })?;
        if frames.is_empty() {
            return Err(malformed(format!("line {line}"), format!("item `{id}` has no dialog acts")));
        }
        if row.reference.trim().is_empty() {
            return Err(malformed(format!("line {line}"), format!("item `{id}` has an empty reference")));
        }
        if let Some(table) = table {
            let missing = check_coverage([frames.as_slice()], table);
            if !missing.is_empty() {
                return Err(IngestError::Coverage { id, missing });
            }
        }
        if !seen.insert(id.clone()) {
            return Err(malformed(format!("line {line}"), format!("duplicate id `{id}`")));
        }
        data.stats.rows_read += 1;
        data.stats.kept += 1;
        data.items.push(NlgItem { id, frames, reference: row.reference, domain: row.domain, dialog_id: row.dialog_id });
    }
    Ok(data)
}
