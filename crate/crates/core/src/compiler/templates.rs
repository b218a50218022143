use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::CompileError;

const DEFAULT_TEMPLATES: &str = include_str!("../../assets/templates.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IcTemplates {
    /// No placeholders beyond `{domain}`.
    pub definition: String,
    /// `{intents}` expands to `n_1: d_1, ..., n_K: d_K`.
    pub constraint: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DstTemplates {
    /// Raw STD input; `{history}` and `{slot_description}`.
    pub std_input: String,
    pub definition: String,
    pub constraint_categorical: String,
    pub constraint_open: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NlgTemplates {
    pub definition_naive: String,
    pub definition_t2g2: String,
    pub constraint: String,
}

/// Definition and constraint skeletons per task. The bundled defaults can be
/// replaced wholesale from a JSON file with the same layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateLibrary {
    pub version: String,
    pub ic: IcTemplates,
    pub dst: DstTemplates,
    pub nlg: NlgTemplates,
}

impl Default for TemplateLibrary {
    fn default() -> Self {
        Self::from_json(DEFAULT_TEMPLATES).expect("bundled templates are valid")
    }
}

impl TemplateLibrary {
    pub fn from_json(text: &str) -> Result<Self, CompileError> {
        let lib: TemplateLibrary =
            serde_json::from_str(text).map_err(|e| CompileError::Templates(e.to_string()))?;
        lib.validate()?;
        Ok(lib)
    }

    fn validate(&self) -> Result<(), CompileError> {
        let fields = [
            ("ic.definition", &self.ic.definition),
            ("ic.constraint", &self.ic.constraint),
            ("dst.std_input", &self.dst.std_input),
            ("dst.definition", &self.dst.definition),
            ("dst.constraint_categorical", &self.dst.constraint_categorical),
            ("dst.constraint_open", &self.dst.constraint_open),
            ("nlg.definition_naive", &self.nlg.definition_naive),
            ("nlg.definition_t2g2", &self.nlg.definition_t2g2),
            ("nlg.constraint", &self.nlg.constraint),
        ];
        for (name, text) in fields {
            if text.trim().is_empty() {
                return Err(CompileError::Templates(format!("`{name}` is empty")));
            }
        }
        if !self.dst.std_input.contains("{history}") {
            return Err(CompileError::Templates("`dst.std_input` must contain {history}".into()));
        }
        Ok(())
    }
}

/// Substitutes `{name}` placeholders. Braces not forming `{identifier}` are
/// kept literally; an identifier missing from `vars` is an error.
pub fn fill(skeleton: &str, vars: &BTreeMap<&str, String>) -> Result<String, CompileError> {
    let mut out = String::with_capacity(skeleton.len());
    let mut rest = skeleton;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let ident_len = after
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .unwrap_or(after.len());
        if ident_len > 0 && after[ident_len..].starts_with('}') {
            let name = &after[..ident_len];
            let value = vars
                .get(name)
                .ok_or_else(|| CompileError::UnknownPlaceholder(name.to_string()))?;
            out.push_str(value);
            rest = &after[ident_len + 1..];
        } else {
            out.push('{');
            rest = after;
        }
    }
    out.push_str(rest);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_library_loads() {
        let lib = TemplateLibrary::default();
        assert!(lib.nlg.definition_t2g2.contains("paraphras"));
        assert!(lib.nlg.definition_naive.contains("verbalize"));
        assert!(lib.dst.constraint_open.contains("latest mention"));
    }

    #[test]
    fn fill_substitutes_and_keeps_literals() {
        let vars: BTreeMap<&str, String> = [("slot", "hotel area".to_string())].into_iter().collect();
        assert_eq!(fill("What is {slot}?", &vars).unwrap(), "What is hotel area?");
        assert_eq!(fill("{ {} {x-y} {", &vars).unwrap(), "{ {} {x-y} {");
        assert!(matches!(fill("{nope}", &vars), Err(CompileError::UnknownPlaceholder(n)) if n == "nope"));
        // substituted values are not re-scanned
        let vars: BTreeMap<&str, String> = [("a", "{b}".to_string())].into_iter().collect();
        assert_eq!(fill("{a}", &vars).unwrap(), "{b}");
    }

    #[test]
    fn rejects_incomplete_library() {
        let mut lib = TemplateLibrary::default();
        lib.nlg.constraint.clear();
        let text = serde_json::to_string(&lib).unwrap();
        assert!(TemplateLibrary::from_json(&text).is_err());
    }
}
