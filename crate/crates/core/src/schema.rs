//! Shared domain types: ontology, dialog histories and states, dialog acts,
//! instruction templates and compiled examples.
//!
//! Every type here is an immutable value once constructed and round-trips
//! through JSON with the field names used in ontology and fixture files.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Value a dialog-state slot takes when the user has not mentioned it.
pub const NONE_VALUE: &str = "none";

/// Values a boolean slot may take besides [`NONE_VALUE`].
pub const BOOLEAN_VALUES: [&str; 2] = ["yes", "no"];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SchemaError {
    #[error("dialog history is empty")]
    EmptyHistory,
    #[error("dialog history must start with a user turn")]
    HistoryStartsWithSystem,
    #[error("dialog history must end with a user turn")]
    HistoryEndsWithSystem,
    #[error("speakers must alternate: turn {index} repeats speaker `{speaker}`")]
    NonAlternating { index: usize, speaker: Speaker },
    #[error("unknown {what} `{value}`")]
    UnknownVariant { what: &'static str, value: String },
}

/// Lowercases, trims, and collapses runs of whitespace and underscores into
/// single spaces. This is the comparison basis for every metric.
pub fn normalize_label(raw: &str) -> String {
    let lowered = raw.to_lowercase();
    let mut out = String::with_capacity(lowered.len());
    let mut pending_space = false;
    for ch in lowered.chars() {
        if ch.is_whitespace() || ch == '_' {
            pending_space = !out.is_empty();
        } else {
            if pending_space {
                out.push(' ');
                pending_space = false;
            }
            out.push(ch);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Ontology
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ontology {
    pub name: String,
    #[serde(default)]
    pub version: String,
    pub domains: Vec<DomainSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub name: String,
    #[serde(default)]
    pub intents: Vec<IntentSpec>,
    #[serde(default)]
    pub slots: Vec<SlotSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntentSpec {
    pub name: String,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlotKind {
    Categorical,
    Open,
    Boolean,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotSpec {
    pub domain: String,
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub kind: SlotKind,
    #[serde(default)]
    pub candidate_values: Vec<String>,
}

impl SlotSpec {
    pub fn key(&self) -> SlotKey {
        SlotKey::new(&self.domain, &self.name)
    }

    /// The "naive" slot description: domain and slot name, no type information.
    pub fn naive_description(&self) -> String {
        format!("{} {}", self.domain, self.name)
    }

    /// Values the slot may take, excluding the none-sentinel. Empty for open slots.
    pub fn value_space(&self) -> Vec<String> {
        match self.kind {
            SlotKind::Categorical => self.candidate_values.clone(),
            SlotKind::Boolean => BOOLEAN_VALUES.iter().map(|v| v.to_string()).collect(),
            SlotKind::Open => Vec::new(),
        }
    }
}

/// A rule the ontology breaks, with the entity it concerns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub entity: String,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.entity, self.rule)
    }
}

impl Ontology {
    pub fn domain(&self, name: &str) -> Option<&DomainSpec> {
        let wanted = normalize_label(name);
        self.domains.iter().find(|d| normalize_label(&d.name) == wanted)
    }

    pub fn slot(&self, key: &SlotKey) -> Option<&SlotSpec> {
        self.domain(&key.domain)?
            .slots
            .iter()
            .find(|s| s.name == key.slot)
    }

    /// Domains whose intent list contains `intent` (compared normalized).
    pub fn domains_for_intent(&self, intent: &str) -> Vec<&DomainSpec> {
        let wanted = normalize_label(intent);
        self.domains
            .iter()
            .filter(|d| d.intents.iter().any(|i| normalize_label(&i.name) == wanted))
            .collect()
    }

    /// Checks every structural invariant. An empty result means the ontology is
    /// well-formed.
    pub fn validate(&self) -> Vec<Violation> {
        validate_ontology(self)
    }
}

pub fn validate_ontology(ontology: &Ontology) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |entity: String, rule: String| out.push(Violation { entity, rule });

    let mut domain_seen: BTreeMap<String, usize> = BTreeMap::new();
    for (di, domain) in ontology.domains.iter().enumerate() {
        if domain.name.trim().is_empty() {
            push(format!("domain #{di}"), "domain name is empty".into());
        }
        if let Some(first) = domain_seen.insert(domain.name.clone(), di) {
            push(
                format!("domain `{}`", domain.name),
                format!("duplicate domain name (entries #{first} and #{di})"),
            );
        }

        let mut intent_seen: BTreeMap<&str, usize> = BTreeMap::new();
        for (ii, intent) in domain.intents.iter().enumerate() {
            let entity = format!("intent `{}/{}`", domain.name, intent.name);
            if intent.name.trim().is_empty() {
                push(format!("intent {}#{ii}", domain.name), "intent name is empty".into());
            }
            if intent.description.trim().is_empty() {
                push(entity.clone(), "intent description is empty".into());
            }
            if let Some(first) = intent_seen.insert(&intent.name, ii) {
                push(
                    entity,
                    format!("duplicate intent name within domain (entries #{first} and #{ii})"),
                );
            }
        }

        let mut slot_seen: BTreeMap<&str, usize> = BTreeMap::new();
        for (si, slot) in domain.slots.iter().enumerate() {
            let entity = format!("slot ({}, {})", slot.domain, slot.name);
            if slot.name.trim().is_empty() {
                push(format!("slot {}#{si}", domain.name), "slot name is empty".into());
            }
            if slot.domain != domain.name {
                push(
                    entity.clone(),
                    format!("slot domain does not match enclosing domain `{}`", domain.name),
                );
            }
            if let Some(first) = slot_seen.insert(&slot.name, si) {
                push(
                    entity.clone(),
                    format!("duplicate slot identifier (entries #{first} and #{si})"),
                );
            }
            match slot.kind {
                SlotKind::Categorical => {
                    if slot.candidate_values.is_empty() {
                        push(entity.clone(), "categorical slot has no candidate values".into());
                    }
                    let mut values = BTreeSet::new();
                    for v in &slot.candidate_values {
                        if !values.insert(v.as_str()) {
                            push(entity.clone(), format!("duplicate candidate value `{v}`"));
                        }
                    }
                }
                SlotKind::Open | SlotKind::Boolean => {
                    if !slot.candidate_values.is_empty() {
                        push(
                            entity.clone(),
                            "non-categorical slot must not list candidate values".into(),
                        );
                    }
                }
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Dialog history and state
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    User,
    System,
}

impl Speaker {
    pub fn tag(self) -> &'static str {
        match self {
            Speaker::User => "user",
            Speaker::System => "system",
        }
    }
}

impl fmt::Display for Speaker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub utterance: String,
}

impl Turn {
    pub fn user(utterance: impl Into<String>) -> Self {
        Self { speaker: Speaker::User, utterance: utterance.into() }
    }

    pub fn system(utterance: impl Into<String>) -> Self {
        Self { speaker: Speaker::System, utterance: utterance.into() }
    }
}

/// Alternating user/system turns ending at the `turn_index`-th user turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawHistory", into = "RawHistory")]
pub struct DialogHistory {
    turns: Vec<Turn>,
    turn_index: usize,
}

#[derive(Serialize, Deserialize)]
struct RawHistory {
    turns: Vec<Turn>,
    turn_index: usize,
}

impl TryFrom<RawHistory> for DialogHistory {
    type Error = SchemaError;

    fn try_from(raw: RawHistory) -> Result<Self, Self::Error> {
        DialogHistory::new(raw.turns)
    }
}

impl From<DialogHistory> for RawHistory {
    fn from(h: DialogHistory) -> Self {
        RawHistory { turns: h.turns, turn_index: h.turn_index }
    }
}

impl DialogHistory {
    pub fn new(turns: Vec<Turn>) -> Result<Self, SchemaError> {
        check_alternation(&turns)?;
        match turns.last() {
            None => return Err(SchemaError::EmptyHistory),
            Some(t) if t.speaker != Speaker::User => return Err(SchemaError::HistoryEndsWithSystem),
            _ => {}
        }
        let turn_index = turns.len().div_ceil(2);
        Ok(Self { turns, turn_index })
    }

    pub fn turns(&self) -> &[Turn] {
        &self.turns
    }

    /// Number of user turns, `t` in `U_1, S_1, ..., U_t`.
    pub fn turn_index(&self) -> usize {
        self.turn_index
    }

    /// `user: ... system: ... user: ...` joined by single spaces.
    pub fn flatten(&self) -> String {
        let mut out = String::new();
        for (i, turn) in self.turns.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(turn.speaker.tag());
            out.push_str(": ");
            out.push_str(&turn.utterance);
        }
        out
    }
}

/// Checks that `turns` start with the user and strictly alternate. Does not
/// require the sequence to end with a user turn.
pub fn check_alternation(turns: &[Turn]) -> Result<(), SchemaError> {
    let first = turns.first().ok_or(SchemaError::EmptyHistory)?;
    if first.speaker != Speaker::User {
        return Err(SchemaError::HistoryStartsWithSystem);
    }
    for (index, pair) in turns.windows(2).enumerate() {
        if pair[0].speaker == pair[1].speaker {
            return Err(SchemaError::NonAlternating { index: index + 1, speaker: pair[1].speaker });
        }
    }
    Ok(())
}

/// `(domain, slot)` identifier.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SlotKey {
    pub domain: String,
    pub slot: String,
}

impl SlotKey {
    pub fn new(domain: impl Into<String>, slot: impl Into<String>) -> Self {
        Self { domain: domain.into(), slot: slot.into() }
    }
}

impl fmt::Display for SlotKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.domain, self.slot)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct StateEntry {
    domain: String,
    slot: String,
    value: String,
}

/// Slot values at one turn. Unmentioned slots are absent, which compares equal
/// to an explicit [`NONE_VALUE`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<StateEntry>", into = "Vec<StateEntry>")]
pub struct DialogState {
    pub entries: BTreeMap<SlotKey, String>,
}

impl From<Vec<StateEntry>> for DialogState {
    fn from(v: Vec<StateEntry>) -> Self {
        Self {
            entries: v
                .into_iter()
                .map(|e| (SlotKey::new(e.domain, e.slot), e.value))
                .collect(),
        }
    }
}

impl From<DialogState> for Vec<StateEntry> {
    fn from(s: DialogState) -> Self {
        s.entries
            .into_iter()
            .map(|(k, value)| StateEntry { domain: k.domain, slot: k.slot, value })
            .collect()
    }
}

impl DialogState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: SlotKey, value: impl Into<String>) {
        self.entries.insert(key, value.into());
    }

    /// The value for `key`, or [`NONE_VALUE`] when absent.
    pub fn value(&self, key: &SlotKey) -> &str {
        self.entries.get(key).map(String::as_str).unwrap_or(NONE_VALUE)
    }

    /// Checks keys against the ontology and categorical values against their
    /// candidate lists (normalized).
    pub fn validate(&self, ontology: &Ontology) -> Vec<Violation> {
        let mut out = Vec::new();
        for (key, value) in &self.entries {
            let Some(slot) = ontology.slot(key) else {
                out.push(Violation {
                    entity: format!("state entry {key}"),
                    rule: "slot is not in the ontology".into(),
                });
                continue;
            };
            let v = normalize_label(value);
            if v == NONE_VALUE || slot.kind == SlotKind::Open {
                continue;
            }
            if !slot.value_space().iter().any(|c| normalize_label(c) == v) {
                out.push(Violation {
                    entity: format!("state entry {key}"),
                    rule: format!("value `{value}` is not a candidate value"),
                });
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Dialog acts
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SlotValue {
    pub slot: String,
    pub value: Option<String>,
}

/// One action `act(slot=value, ...)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DialogActFrame {
    pub act: String,
    #[serde(default)]
    pub slot_values: Vec<SlotValue>,
}

impl DialogActFrame {
    pub fn new(act: impl Into<String>) -> Self {
        Self { act: act.into(), slot_values: Vec::new() }
    }

    pub fn with(mut self, slot: impl Into<String>, value: impl Into<String>) -> Self {
        self.slot_values.push(SlotValue { slot: slot.into(), value: Some(value.into()) });
        self
    }

    pub fn with_slot(mut self, slot: impl Into<String>) -> Self {
        self.slot_values.push(SlotValue { slot: slot.into(), value: None });
        self
    }

    /// `(act, slot)` pairs this frame needs templates for; `(act, None)` for a
    /// slot-less act.
    pub fn template_keys(&self) -> Vec<(String, Option<String>)> {
        if self.slot_values.is_empty() {
            vec![(self.act.clone(), None)]
        } else {
            self.slot_values
                .iter()
                .map(|sv| (self.act.clone(), Some(sv.slot.clone())))
                .collect()
        }
    }
}

// ---------------------------------------------------------------------------
// Task / mode enums
// ---------------------------------------------------------------------------

macro_rules! text_enum {
    ($name:ident, $what:literal, { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = SchemaError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                $(if s.eq_ignore_ascii_case($text) { return Ok($name::$variant); })+
                Err(SchemaError::UnknownVariant { what: $what, value: s.to_string() })
            }
        }
    };
}

text_enum!(Task, "task", { Ic => "IC", Dst => "DST", Nlg => "NLG" });
text_enum!(Mode, "mode", { Std => "STD", Pe => "PE", Cins => "CINS" });
text_enum!(PromptExpression, "prompt expression", {
    Declarative => "declarative",
    Question => "question",
});
text_enum!(NlgRepr, "NLG representation", { Naive => "naive", T2g2 => "t2g2" });

// ---------------------------------------------------------------------------
// Instructions
// ---------------------------------------------------------------------------

/// Definition / Constraint / Prompt texts for one (task, mode, prompt choice).
///
/// Texts may hold `{name}` placeholders until filled. STD templates carry no
/// text; PE templates carry only a prompt; CINS templates carry all three.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionTemplate {
    pub task: Task,
    pub mode: Mode,
    #[serde(default)]
    pub definition: String,
    #[serde(default)]
    pub constraint: String,
    #[serde(default)]
    pub prompt: String,
    #[serde(default)]
    pub prompt_root: String,
    pub prompt_expression: Option<PromptExpression>,
    #[serde(default)]
    pub nlg_repr: Option<NlgRepr>,
}

impl InstructionTemplate {
    pub fn standard(task: Task) -> Self {
        Self {
            task,
            mode: Mode::Std,
            definition: String::new(),
            constraint: String::new(),
            prompt: String::new(),
            prompt_root: String::new(),
            prompt_expression: None,
            nlg_repr: None,
        }
    }

    /// Mode/field consistency, taking the ablation mask into account.
    pub fn check(&self, mask: &AblationMask) -> Result<(), String> {
        let has = |s: &str| !s.trim().is_empty();
        match self.mode {
            Mode::Std => {
                if has(&self.definition) || has(&self.constraint) || has(&self.prompt) {
                    return Err("STD template must not carry definition, constraint or prompt".into());
                }
            }
            Mode::Pe => {
                if has(&self.definition) || has(&self.constraint) {
                    return Err("PE template must not carry definition or constraint".into());
                }
                if !has(&self.prompt) && !mask.drop_prompt {
                    return Err("PE template needs a prompt".into());
                }
            }
            Mode::Cins => {
                for (present, dropped, name) in [
                    (has(&self.definition), mask.drop_definition, "definition"),
                    (has(&self.constraint), mask.drop_constraint, "constraint"),
                    (has(&self.prompt), mask.drop_prompt, "prompt"),
                ] {
                    if !present && !dropped {
                        return Err(format!("CINS template is missing its {name}"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn template_id(&self) -> String {
        let mut id = format!("{}/{}", self.task, self.mode);
        if let Some(expr) = self.prompt_expression {
            id.push_str(&format!("/{}-{}", self.prompt_root, expr));
        }
        if let Some(repr) = self.nlg_repr {
            id.push_str(&format!("/{repr}"));
        }
        id
    }
}

/// Which instruction parts to remove. `drop_descriptions` keeps every segment
/// and only swaps label/slot descriptions for their bare names.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationMask {
    pub drop_definition: bool,
    pub drop_constraint: bool,
    pub drop_prompt: bool,
    pub drop_descriptions: bool,
}

impl AblationMask {
    pub const NONE: AblationMask = AblationMask {
        drop_definition: false,
        drop_constraint: false,
        drop_prompt: false,
        drop_descriptions: false,
    };

    pub fn is_none(&self) -> bool {
        *self == Self::NONE
    }

    /// Full instruction plus the four single-part ablations.
    pub fn standard_grid() -> Vec<AblationMask> {
        vec![
            Self::NONE,
            AblationMask { drop_definition: true, ..Self::NONE },
            AblationMask { drop_constraint: true, ..Self::NONE },
            AblationMask { drop_prompt: true, ..Self::NONE },
            AblationMask { drop_descriptions: true, ..Self::NONE },
        ]
    }

    /// Short stable label, e.g. `full`, `no-definition`, `no-constraint+no-prompt`.
    pub fn label(&self) -> String {
        let parts: Vec<&str> = [
            (self.drop_definition, "no-definition"),
            (self.drop_constraint, "no-constraint"),
            (self.drop_prompt, "no-prompt"),
            (self.drop_descriptions, "no-description"),
        ]
        .into_iter()
        .filter_map(|(on, name)| on.then_some(name))
        .collect();
        if parts.is_empty() {
            "full".to_string()
        } else {
            parts.join("+")
        }
    }
}

/// One model input/output pair with provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompiledExample {
    pub id: String,
    pub task: Task,
    pub input_text: String,
    pub target_text: String,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn slot(domain: &str, name: &str, kind: SlotKind, values: &[&str]) -> SlotSpec {
        SlotSpec {
            domain: domain.into(),
            name: name.into(),
            description: format!("{name} of the {domain}"),
            kind,
            candidate_values: values.iter().map(|v| v.to_string()).collect(),
        }
    }

    fn intent(name: &str) -> IntentSpec {
        IntentSpec { name: name.into(), description: format!("user wants to {name}") }
    }

    pub(crate) fn two_domain_fixture() -> Ontology {
        Ontology {
            name: "fixture".into(),
            version: "1".into(),
            domains: vec![
                DomainSpec {
                    name: "hotel".into(),
                    intents: vec![intent("book hotel"), intent("find hotel")],
                    slots: vec![
                        slot("hotel", "price-range", SlotKind::Categorical, &["cheap", "moderate", "expensive"]),
                        slot("hotel", "has-internet", SlotKind::Boolean, &[]),
                        slot("hotel", "name", SlotKind::Open, &[]),
                    ],
                },
                DomainSpec {
                    name: "taxi".into(),
                    intents: vec![intent("book taxi")],
                    slots: vec![slot("taxi", "leave-at", SlotKind::Open, &[])],
                },
            ],
        }
    }

    #[test]
    fn well_formed_fixture_has_no_violations() {
        assert_eq!(validate_ontology(&two_domain_fixture()), vec![]);
    }

    #[test]
    fn empty_categorical_candidates_flagged() {
        let mut o = two_domain_fixture();
        o.domains[0].slots[0].candidate_values.clear();
        let v = validate_ontology(&o);
        assert_eq!(v.len(), 1);
        assert!(v[0].entity.contains("(hotel, price-range)"), "{v:?}");
    }

    #[test]
    fn duplicate_intent_flagged_once_with_both_entries() {
        let mut o = two_domain_fixture();
        o.domains[0].intents.push(intent("book hotel"));
        let v = validate_ontology(&o);
        assert_eq!(v.len(), 1, "{v:?}");
        assert!(v[0].entity.contains("hotel/book hotel"));
        assert!(v[0].rule.contains("#0") && v[0].rule.contains("#2"), "{}", v[0].rule);
    }

    #[test]
    fn other_invariant_breaches() {
        let mut o = two_domain_fixture();
        o.domains[0].slots[2].candidate_values.push("x".into());
        o.domains[1].intents[0].description.clear();
        o.domains[1].name = "hotel".into();
        o.domains[1].slots[0].domain = "hotel".into();
        let v = validate_ontology(&o);
        let rules: Vec<&str> = v.iter().map(|x| x.rule.as_str()).collect();
        assert_eq!(v.len(), 3, "{rules:?}");
        assert!(rules.iter().any(|r| r.contains("non-categorical")));
        assert!(rules.iter().any(|r| r.contains("description is empty")));
        assert!(rules.iter().any(|r| r.contains("duplicate domain")));
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_label("book hotel"), "book hotel");
        assert_eq!(normalize_label("Book_Hotel "), "book hotel");
        assert_eq!(normalize_label(""), "");
        assert_eq!(normalize_label("  __A \t\n b__ "), "a b");
    }

    #[test]
    fn history_rules() {
        let h = DialogHistory::new(vec![Turn::user("hi"), Turn::system("hello"), Turn::user("a hotel")]).unwrap();
        assert_eq!(h.turn_index(), 2);
        assert_eq!(h.flatten(), "user: hi system: hello user: a hotel");
        assert_eq!(DialogHistory::new(vec![]), Err(SchemaError::EmptyHistory));
        assert_eq!(
            DialogHistory::new(vec![Turn::system("hi"), Turn::user("x")]),
            Err(SchemaError::HistoryStartsWithSystem)
        );
        assert_eq!(
            DialogHistory::new(vec![Turn::user("hi"), Turn::system("x")]),
            Err(SchemaError::HistoryEndsWithSystem)
        );
        assert!(matches!(
            DialogHistory::new(vec![Turn::user("a"), Turn::user("b")]),
            Err(SchemaError::NonAlternating { index: 1, .. })
        ));
    }

    #[test]
    fn history_deserialization_validates() {
        let bad = r#"{"turns":[{"speaker":"system","utterance":"x"}],"turn_index":1}"#;
        assert!(serde_json::from_str::<DialogHistory>(bad).is_err());
    }

    #[test]
    fn state_absent_is_none_and_validation() {
        let o = two_domain_fixture();
        let mut s = DialogState::new();
        s.insert(SlotKey::new("hotel", "price-range"), "Cheap");
        s.insert(SlotKey::new("hotel", "has-internet"), "none");
        assert_eq!(s.value(&SlotKey::new("hotel", "name")), NONE_VALUE);
        assert!(s.validate(&o).is_empty());
        s.insert(SlotKey::new("hotel", "price-range"), "free");
        s.insert(SlotKey::new("hotel", "stars"), "5");
        assert_eq!(s.validate(&o).len(), 2);
    }

    #[test]
    fn enum_text_forms() {
        assert_eq!("cins".parse::<Mode>().unwrap(), Mode::Cins);
        assert_eq!(serde_json::to_string(&Task::Dst).unwrap(), "\"DST\"");
        assert_eq!(serde_json::to_string(&NlgRepr::T2g2).unwrap(), "\"t2g2\"");
        assert!("XYZ".parse::<Task>().is_err());
    }

    #[test]
    fn template_mode_consistency() {
        let mut t = InstructionTemplate::standard(Task::Ic);
        assert!(t.check(&AblationMask::NONE).is_ok());
        t.prompt = "p".into();
        assert!(t.check(&AblationMask::NONE).is_err());
        t.mode = Mode::Pe;
        assert!(t.check(&AblationMask::NONE).is_ok());
        t.mode = Mode::Cins;
        assert!(t.check(&AblationMask::NONE).is_err());
        let mask = AblationMask { drop_definition: true, drop_constraint: true, ..AblationMask::NONE };
        assert!(t.check(&mask).is_ok());
    }

    #[test]
    fn ablation_labels() {
        let labels: Vec<String> = AblationMask::standard_grid().iter().map(|m| m.label()).collect();
        assert_eq!(labels, ["full", "no-definition", "no-constraint", "no-prompt", "no-description"]);
    }

    fn text() -> impl Strategy<Value = String> {
        "[a-zA-Z0-9 _,.\\-]{0,12}"
    }

    fn arb_slot() -> impl Strategy<Value = SlotSpec> {
        (text(), text(), text(), prop_oneof![Just(SlotKind::Categorical), Just(SlotKind::Open), Just(SlotKind::Boolean)], prop::collection::vec(text(), 0..4))
            .prop_map(|(domain, name, description, kind, candidate_values)| SlotSpec { domain, name, description, kind, candidate_values })
    }

    fn arb_ontology() -> impl Strategy<Value = Ontology> {
        let domain = (
            text(),
            prop::collection::vec((text(), text()).prop_map(|(name, description)| IntentSpec { name, description }), 0..4),
            prop::collection::vec(arb_slot(), 0..4),
        )
            .prop_map(|(name, intents, slots)| DomainSpec { name, intents, slots });
        (text(), text(), prop::collection::vec(domain, 0..4))
            .prop_map(|(name, version, domains)| Ontology { name, version, domains })
    }

    /// Independent restatement of the invariants as a single predicate.
    fn obviously_valid(o: &Ontology) -> bool {
        let names: BTreeSet<_> = o.domains.iter().map(|d| &d.name).collect();
        names.len() == o.domains.len()
            && o.domains.iter().all(|d| {
                let intents: BTreeSet<_> = d.intents.iter().map(|i| &i.name).collect();
                let slots: BTreeSet<_> = d.slots.iter().map(|s| &s.name).collect();
                !d.name.trim().is_empty()
                    && intents.len() == d.intents.len()
                    && slots.len() == d.slots.len()
                    && d.intents.iter().all(|i| !i.name.trim().is_empty() && !i.description.trim().is_empty())
                    && d.slots.iter().all(|s| {
                        let uniq: BTreeSet<_> = s.candidate_values.iter().collect();
                        !s.name.trim().is_empty()
                            && s.domain == d.name
                            && match s.kind {
                                SlotKind::Categorical => !s.candidate_values.is_empty() && uniq.len() == s.candidate_values.len(),
                                _ => s.candidate_values.is_empty(),
                            }
                    })
            })
    }

    fn arb_frame() -> impl Strategy<Value = DialogActFrame> {
        ("[A-Za-z]{1,8}", prop::collection::vec(("[a-z]{1,6}", prop::option::of(text())), 0..3)).prop_map(|(act, svs)| DialogActFrame {
            act,
            slot_values: svs.into_iter().map(|(slot, value)| SlotValue { slot, value }).collect(),
        })
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(s in "\\PC{0,24}") {
            let once = normalize_label(&s);
            prop_assert_eq!(normalize_label(&once), once);
        }

        #[test]
        fn validate_matches_predicate(o in arb_ontology()) {
            prop_assert_eq!(validate_ontology(&o).is_empty(), obviously_valid(&o));
        }

        #[test]
        fn ontology_round_trips(o in arb_ontology()) {
            let back: Ontology = serde_json::from_str(&serde_json::to_string(&o).unwrap()).unwrap();
            prop_assert_eq!(back, o);
        }

        #[test]
        fn frames_and_states_round_trip(
            frames in prop::collection::vec(arb_frame(), 0..4),
            entries in prop::collection::btree_map(("[a-z]{1,5}", "[a-z-]{1,8}"), text(), 0..5),
        ) {
            let back: Vec<DialogActFrame> = serde_json::from_str(&serde_json::to_string(&frames).unwrap()).unwrap();
            prop_assert_eq!(back, frames);
            let state = DialogState { entries: entries.into_iter().map(|((d, s), v)| (SlotKey::new(d, s), v)).collect() };
            let back: DialogState = serde_json::from_str(&serde_json::to_string(&state).unwrap()).unwrap();
            prop_assert_eq!(back, state);
        }

        #[test]
        fn history_and_example_round_trip(utts in prop::collection::vec(text(), 1..6), meta in prop::collection::btree_map("[a-z]{1,4}", text(), 0..3)) {
            let n = if utts.len() % 2 == 0 { utts.len() - 1 } else { utts.len() };
            let turns: Vec<Turn> = utts.into_iter().take(n).enumerate()
                .map(|(i, u)| if i % 2 == 0 { Turn::user(u) } else { Turn::system(u) }).collect();
            let h = DialogHistory::new(turns).unwrap();
            let back: DialogHistory = serde_json::from_str(&serde_json::to_string(&h).unwrap()).unwrap();
            prop_assert_eq!(&back, &h);
            let ex = CompiledExample { id: "x".into(), task: Task::Dst, input_text: h.flatten(), target_text: "none".into(), meta };
            let back: CompiledExample = serde_json::from_str(&serde_json::to_string(&ex).unwrap()).unwrap();
            prop_assert_eq!(back, ex);
        }
    }
}
