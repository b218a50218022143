//! Dialog-act strings and their two NLG input representations.
//!
//! Grammar accepted by [`parse_acts`]:
//!
//! ```text
//! acts   := ws ( '[' items? ']' | items? ) ws
//! items  := item ( ',' item )*
//! item   := name '(' ( pair ( ',' pair )* )? ')'
//! pair   := name ( '=' value )?
//! value  := quoted | bare
//! quoted := '"' ( [^"\\] | '\\' any )* '"'
//! bare   := [^,=()\[\]"]+          (trimmed, may contain spaces)
//! name   := [^,=()\[\]"]+          (trimmed, no whitespace)
//! ```
//!
//! Values containing a delimiter, a quote or surrounding whitespace must be
//! quoted; [`render_naive`] does this automatically.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::{DialogActFrame, SlotValue};

pub const VALUE_PLACEHOLDER: &str = "{value}";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("dialog-act parse error at offset {offset}: {kind}")]
pub struct ParseError {
    /// Character offset into the input.
    pub offset: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    UnbalancedParen,
    UnbalancedBracket,
    EmptyActName,
    EmptySlotName,
    DanglingEquals,
    UnterminatedQuote,
    WhitespaceInName,
    Unexpected(char),
    TrailingInput,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::UnbalancedParen => f.write_str("unbalanced parentheses"),
            ParseErrorKind::UnbalancedBracket => f.write_str("unbalanced brackets"),
            ParseErrorKind::EmptyActName => f.write_str("empty act name"),
            ParseErrorKind::EmptySlotName => f.write_str("empty slot name"),
            ParseErrorKind::DanglingEquals => f.write_str("`=` without a value"),
            ParseErrorKind::UnterminatedQuote => f.write_str("unterminated quoted value"),
            ParseErrorKind::WhitespaceInName => f.write_str("whitespace inside a name"),
            ParseErrorKind::Unexpected(c) => write!(f, "unexpected `{c}`"),
            ParseErrorKind::TrailingInput => f.write_str("trailing input after closing bracket"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RenderError {
    #[error("cannot render an empty list of dialog acts")]
    NoFrames,
    #[error("no template for ({act}, {})", slot.as_deref().unwrap_or("-"))]
    MissingTemplate { act: String, slot: Option<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateTableError {
    #[error("duplicate template for ({act}, {})", slot.as_deref().unwrap_or("-"))]
    Duplicate { act: String, slot: Option<String> },
    #[error("template for ({act}, {}) has {count} `{{value}}` placeholders", slot.as_deref().unwrap_or("-"))]
    Placeholders { act: String, slot: Option<String>, count: usize },
    #[error("template file: {0}")]
    Json(String),
}

fn is_delim(c: char) -> bool {
    matches!(c, ',' | '=' | '(' | ')' | '[' | ']' | '"')
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
}

impl Parser {
    fn err<T>(&self, offset: usize, kind: ParseErrorKind) -> Result<T, ParseError> {
        Err(ParseError { offset, kind })
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    /// Reads a run of non-delimiter characters and returns it trimmed, with
    /// the offset of its first non-space character.
    fn bare(&mut self) -> (String, usize) {
        self.skip_ws();
        let start = self.pos;
        while self.peek().is_some_and(|c| !is_delim(c)) {
            self.pos += 1;
        }
        let raw: String = self.chars[start..self.pos].iter().collect();
        (raw.trim_end().to_string(), start)
    }

    fn name(&mut self, empty: ParseErrorKind) -> Result<String, ParseError> {
        let (name, start) = self.bare();
        if name.is_empty() {
            return self.err(start, empty);
        }
        if let Some(i) = name.chars().position(char::is_whitespace) {
            return self.err(start + i, ParseErrorKind::WhitespaceInName);
        }
        Ok(name)
    }

    fn quoted(&mut self) -> Result<String, ParseError> {
        let open = self.pos;
        self.pos += 1;
        let mut out = String::new();
        loop {
            match self.peek() {
                None => return self.err(open, ParseErrorKind::UnterminatedQuote),
                Some('"') => {
                    self.pos += 1;
                    return Ok(out);
                }
                Some('\\') => {
                    self.pos += 1;
                    match self.peek() {
                        None => return self.err(open, ParseErrorKind::UnterminatedQuote),
                        Some(c) => out.push(c),
                    }
                    self.pos += 1;
                }
                Some(c) => {
                    out.push(c);
                    self.pos += 1;
                }
            }
        }
    }

    fn value(&mut self, eq_offset: usize) -> Result<String, ParseError> {
        self.skip_ws();
        if self.peek() == Some('"') {
            return self.quoted();
        }
        let (value, _) = self.bare();
        if value.is_empty() {
            return self.err(eq_offset, ParseErrorKind::DanglingEquals);
        }
        Ok(value)
    }

    fn item(&mut self) -> Result<DialogActFrame, ParseError> {
        let act = self.name(ParseErrorKind::EmptyActName)?;
        self.skip_ws();
        let open = self.pos;
        match self.peek() {
            Some('(') => self.pos += 1,
            None => return self.err(self.pos, ParseErrorKind::UnbalancedParen),
            Some(c) => return self.err(self.pos, ParseErrorKind::Unexpected(c)),
        }
        let mut frame = DialogActFrame::new(act);
        self.skip_ws();
        if self.peek() == Some(')') {
            self.pos += 1;
            return Ok(frame);
        }
        loop {
            let slot = self.name(ParseErrorKind::EmptySlotName)?;
            self.skip_ws();
            let value = if self.peek() == Some('=') {
                let eq = self.pos;
                self.pos += 1;
                Some(self.value(eq)?)
            } else {
                None
            };
            frame.slot_values.push(SlotValue { slot, value });
            self.skip_ws();
            match self.peek() {
                Some(',') => self.pos += 1,
                Some(')') => {
                    self.pos += 1;
                    return Ok(frame);
                }
                None => return self.err(open, ParseErrorKind::UnbalancedParen),
                Some('(') => return self.err(self.pos, ParseErrorKind::UnbalancedParen),
                Some(c) => return self.err(self.pos, ParseErrorKind::Unexpected(c)),
            }
        }
    }
}

/// Parses `[Inform(name=Rosewood), Inform(star=5)]`-style strings.
pub fn parse_acts(text: &str) -> Result<Vec<DialogActFrame>, ParseError> {
    let mut p = Parser { chars: text.chars().collect(), pos: 0 };
    p.skip_ws();
    let bracket = if p.peek() == Some('[') {
        let at = p.pos;
        p.pos += 1;
        p.skip_ws();
        Some(at)
    } else {
        None
    };

    let mut frames = Vec::new();
    let at_end = |p: &Parser| match p.peek() {
        None => true,
        Some(']') => bracket.is_some(),
        _ => false,
    };
    if !at_end(&p) {
        loop {
            frames.push(p.item()?);
            p.skip_ws();
            match p.peek() {
                Some(',') => p.pos += 1,
                Some(')') => return p.err(p.pos, ParseErrorKind::UnbalancedParen),
                Some(']') if bracket.is_none() => return p.err(p.pos, ParseErrorKind::UnbalancedBracket),
                Some(c) if !at_end(&p) => return p.err(p.pos, ParseErrorKind::Unexpected(c)),
                _ => break,
            }
        }
    }

    if let Some(open) = bracket {
        if p.peek() != Some(']') {
            return p.err(open, ParseErrorKind::UnbalancedBracket);
        }
        p.pos += 1;
        p.skip_ws();
        if p.peek().is_some() {
            return p.err(p.pos, ParseErrorKind::TrailingInput);
        }
    }
    Ok(frames)
}

fn needs_quotes(value: &str) -> bool {
    value.is_empty()
        || value.chars().any(|c| is_delim(c) || c == '\\')
        || value.starts_with(char::is_whitespace)
        || value.ends_with(char::is_whitespace)
}

fn push_value(out: &mut String, value: &str) {
    if !needs_quotes(value) {
        out.push_str(value);
        return;
    }
    out.push('"');
    for c in value.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
}

/// Canonical "naive" serialization, e.g. `Inform(name=Rosewood), Inform(star=5)`.
pub fn render_naive(frames: &[DialogActFrame]) -> Result<String, RenderError> {
    if frames.is_empty() {
        return Err(RenderError::NoFrames);
    }
    let mut out = String::new();
    for (i, frame) in frames.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(&frame.act);
        out.push('(');
        for (j, sv) in frame.slot_values.iter().enumerate() {
            if j > 0 {
                out.push_str(", ");
            }
            out.push_str(&sv.slot);
            if let Some(v) = &sv.value {
                out.push('=');
                push_value(&mut out, v);
            }
        }
        out.push(')');
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateEntry {
    pub act: String,
    pub slot: Option<String>,
    pub template: String,
}

/// Human-written templates keyed by `(act, slot)`; `(act, None)` covers acts
/// without slots.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TemplateTable {
    entries: BTreeMap<(String, Option<String>), String>,
}

impl TemplateTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a template. Slot templates may hold at most one `{value}`;
    /// slot-less templates must hold none.
    pub fn insert(
        &mut self,
        act: impl Into<String>,
        slot: Option<&str>,
        template: impl Into<String>,
    ) -> Result<(), TemplateTableError> {
        let (act, template) = (act.into(), template.into());
        let slot = slot.map(str::to_string);
        let count = template.matches(VALUE_PLACEHOLDER).count();
        let max = if slot.is_some() { 1 } else { 0 };
        if count > max {
            return Err(TemplateTableError::Placeholders { act, slot, count });
        }
        match self.entries.entry((act, slot)) {
            std::collections::btree_map::Entry::Occupied(e) => {
                let (act, slot) = e.key().clone();
                Err(TemplateTableError::Duplicate { act, slot })
            }
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(template);
                Ok(())
            }
        }
    }

    pub fn get(&self, act: &str, slot: Option<&str>) -> Option<&str> {
        self.entries
            .get(&(act.to_string(), slot.map(str::to_string)))
            .map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn from_entries(entries: Vec<TemplateEntry>) -> Result<Self, TemplateTableError> {
        let mut table = Self::new();
        for e in entries {
            table.insert(e.act, e.slot.as_deref(), e.template)?;
        }
        Ok(table)
    }

    pub fn to_entries(&self) -> Vec<TemplateEntry> {
        self.entries
            .iter()
            .map(|((act, slot), template)| TemplateEntry {
                act: act.clone(),
                slot: slot.clone(),
                template: template.clone(),
            })
            .collect()
    }

    /// Reads a JSON array of `{"act", "slot", "template"}` objects.
    pub fn from_json(text: &str) -> Result<Self, TemplateTableError> {
        let entries: Vec<TemplateEntry> =
            serde_json::from_str(text).map_err(|e| TemplateTableError::Json(e.to_string()))?;
        Self::from_entries(entries)
    }
}

/// Template-guided rendering: one fragment per `(act, slot, value)`, joined by
/// single spaces in frame order, then slot order.
pub fn render_t2g2(frames: &[DialogActFrame], table: &TemplateTable) -> Result<String, RenderError> {
    if frames.is_empty() {
        return Err(RenderError::NoFrames);
    }
    let mut fragments = Vec::new();
    for frame in frames {
        if frame.slot_values.is_empty() {
            let t = table.get(&frame.act, None).ok_or_else(|| RenderError::MissingTemplate {
                act: frame.act.clone(),
                slot: None,
            })?;
            fragments.push(t.to_string());
            continue;
        }
        for sv in &frame.slot_values {
            let t = table.get(&frame.act, Some(&sv.slot)).ok_or_else(|| RenderError::MissingTemplate {
                act: frame.act.clone(),
                slot: Some(sv.slot.clone()),
            })?;
            // value-less mentions (e.g. Request(time)) leave the placeholder empty
            fragments.push(t.replace(VALUE_PLACEHOLDER, sv.value.as_deref().unwrap_or("")));
        }
    }
    Ok(fragments.join(" "))
}

/// `(act, slot)` pairs used by `corpus` that `table` lacks, sorted and
/// de-duplicated.
pub fn check_coverage<'a, I>(corpus: I, table: &TemplateTable) -> Vec<(String, Option<String>)>
where
    I: IntoIterator<Item = &'a [DialogActFrame]>,
{
    let mut missing = BTreeSet::new();
    for frames in corpus {
        for frame in frames {
            for (act, slot) in frame.template_keys() {
                if table.get(&act, slot.as_deref()).is_none() {
                    missing.insert((act, slot));
                }
            }
        }
    }
    missing.into_iter().collect()
}
