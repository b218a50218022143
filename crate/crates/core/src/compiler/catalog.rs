use serde::{Deserialize, Serialize};

use super::CompileError;
use crate::schema::{PromptExpression, Task};

/// Prefix every question-form prompt starts with.
pub const QUESTION_PREFIX: &str = "Question: ";

const DEFAULT_PROMPTS: &str = include_str!("../../assets/prompts.json");

/// One prompt text for `(task, root, expression)`.
///
/// DST entries also carry `whether_text`, used for yes/no slots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptEntry {
    pub task: Task,
    pub root: String,
    pub expression: PromptExpression,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub whether_text: Option<String>,
}

/// A prompt root with one of its two expressions.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PromptChoice {
    pub root: String,
    pub expression: PromptExpression,
}

impl PromptChoice {
    pub fn new(root: impl Into<String>, expression: PromptExpression) -> Self {
        Self { root: root.into(), expression }
    }

    pub fn label(&self) -> String {
        let tag = match self.expression {
            PromptExpression::Declarative => "D",
            PromptExpression::Question => "Q",
        };
        format!("{}({tag})", self.root)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptCatalog {
    entries: Vec<PromptEntry>,
}

impl Default for PromptCatalog {
    fn default() -> Self {
        Self::from_json(DEFAULT_PROMPTS).expect("bundled prompt catalog is valid")
    }
}

impl PromptCatalog {
    /// Builds a catalog, checking that every root has both expressions, that
    /// question texts carry the `Question: ` prefix, and that DST entries
    /// have a `whether_text`.
    pub fn new(entries: Vec<PromptEntry>) -> Result<Self, CompileError> {
        let bad = |msg: String| Err(CompileError::Catalog(msg));
        for (i, e) in entries.iter().enumerate() {
            if e.root.trim().is_empty() || e.text.trim().is_empty() {
                return bad(format!("entry #{i} has an empty root or text"));
            }
            if entries[..i]
                .iter()
                .any(|o| o.task == e.task && o.root == e.root && o.expression == e.expression)
            {
                return bad(format!("duplicate entry for ({}, {}, {})", e.task, e.root, e.expression));
            }
            let texts = std::iter::once(&e.text).chain(e.whether_text.iter());
            if e.expression == PromptExpression::Question {
                for t in texts {
                    if !t.starts_with(QUESTION_PREFIX) {
                        return bad(format!("question prompt `{t}` lacks the `{QUESTION_PREFIX}` prefix"));
                    }
                }
            }
            if e.task == Task::Dst && e.whether_text.is_none() {
                return bad(format!("DST prompt ({}, {}) needs a whether_text", e.root, e.expression));
            }
            for expr in PromptExpression::ALL {
                if !entries
                    .iter()
                    .any(|o| o.task == e.task && o.root == e.root && o.expression == *expr)
                {
                    return bad(format!("prompt root ({}, {}) has no {} form", e.task, e.root, expr));
                }
            }
        }
        Ok(Self { entries })
    }

    pub fn from_json(text: &str) -> Result<Self, CompileError> {
        let entries: Vec<PromptEntry> =
            serde_json::from_str(text).map_err(|e| CompileError::Catalog(e.to_string()))?;
        Self::new(entries)
    }

    pub fn entries(&self) -> &[PromptEntry] {
        &self.entries
    }

    pub fn get(&self, task: Task, choice: &PromptChoice) -> Option<&PromptEntry> {
        self.entries
            .iter()
            .find(|e| e.task == task && e.root == choice.root && e.expression == choice.expression)
    }

    /// Prompt roots for `task`, in catalog order.
    pub fn roots(&self, task: Task) -> Vec<&str> {
        let mut roots: Vec<&str> = Vec::new();
        for e in self.entries.iter().filter(|e| e.task == task) {
            if !roots.contains(&e.root.as_str()) {
                roots.push(&e.root);
            }
        }
        roots
    }
}

/// Every root of `task` crossed with both expressions, declarative first.
pub fn variant_matrix(catalog: &PromptCatalog, task: Task) -> Vec<PromptChoice> {
    catalog
        .roots(task)
        .into_iter()
        .flat_map(|root| PromptExpression::ALL.iter().map(move |e| PromptChoice::new(root, *e)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn entry(task: Task, root: &str, expression: PromptExpression, text: &str) -> PromptEntry {
        PromptEntry { task, root: root.into(), expression, text: text.into(), whether_text: None }
    }

    #[test]
    fn bundled_catalog_has_two_roots_per_task() {
        let c = PromptCatalog::default();
        for task in Task::ALL {
            assert_eq!(c.roots(*task).len(), 2, "{task}");
            assert_eq!(variant_matrix(&c, *task).len(), 4);
        }
    }

    #[test]
    fn single_root_gives_two_variants() {
        let c = PromptCatalog::new(vec![
            entry(Task::Ic, "r", PromptExpression::Declarative, "The query is about"),
            entry(Task::Ic, "r", PromptExpression::Question, "Question: What is it about?"),
        ])
        .unwrap();
        assert_eq!(
            variant_matrix(&c, Task::Ic),
            vec![
                PromptChoice::new("r", PromptExpression::Declarative),
                PromptChoice::new("r", PromptExpression::Question)
            ]
        );
        assert!(variant_matrix(&c, Task::Nlg).is_empty());
    }

    #[test]
    fn matrix_matches_key_enumeration() {
        let c = PromptCatalog::default();
        for task in Task::ALL {
            let oracle: BTreeSet<(String, PromptExpression)> = c
                .entries()
                .iter()
                .filter(|e| e.task == *task)
                .map(|e| (e.root.clone(), e.expression))
                .collect();
            let got: BTreeSet<(String, PromptExpression)> =
                variant_matrix(&c, *task).into_iter().map(|p| (p.root, p.expression)).collect();
            assert_eq!(got, oracle);
        }
    }

    #[test]
    fn rejects_malformed_catalogs() {
        let missing_q = vec![entry(Task::Ic, "r", PromptExpression::Declarative, "x")];
        assert!(PromptCatalog::new(missing_q).is_err());
        let no_prefix = vec![
            entry(Task::Ic, "r", PromptExpression::Declarative, "x"),
            entry(Task::Ic, "r", PromptExpression::Question, "What?"),
        ];
        assert!(PromptCatalog::new(no_prefix).is_err());
        let dst_no_whether = vec![
            entry(Task::Dst, "r", PromptExpression::Declarative, "x"),
            entry(Task::Dst, "r", PromptExpression::Question, "Question: x?"),
        ];
        assert!(PromptCatalog::new(dst_no_whether).is_err());
    }

    #[test]
    fn labels() {
        assert_eq!(PromptChoice::new("intent", PromptExpression::Question).label(), "intent(Q)");
    }
}
