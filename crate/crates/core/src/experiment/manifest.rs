use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compiler::{variant_matrix, PromptCatalog, PromptChoice};
use crate::sampler::{SamplePlan, Strategy};
use crate::schema::{AblationMask, Mode, NlgRepr, Task};

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("reading {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing {}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("invalid manifest:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
}

/// Dataset location: one file holding all splits (intents), or one file per
/// split (dialogs, NLG items).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DataPaths {
    Single(PathBuf),
    Split { train: PathBuf, validation: PathBuf, test: PathBuf },
}

/// An ablation given either as a label (`full`, `no-definition`,
/// `no-constraint+no-prompt`, ...) or as a table of flags.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AblationSpec {
    Label(String),
    Mask(AblationMask),
}

pub fn parse_ablation(label: &str) -> Result<AblationMask, String> {
    let mut mask = AblationMask::NONE;
    let label = label.trim();
    if label.eq_ignore_ascii_case("full") {
        return Ok(mask);
    }
    for part in label.split('+') {
        match part.trim().to_ascii_lowercase().as_str() {
            "no-definition" => mask.drop_definition = true,
            "no-constraint" => mask.drop_constraint = true,
            "no-prompt" => mask.drop_prompt = true,
            "no-description" => mask.drop_descriptions = true,
            other => return Err(format!("unknown ablation `{other}`")),
        }
    }
    Ok(mask)
}

impl AblationSpec {
    pub fn mask(&self) -> Result<AblationMask, String> {
        match self {
            AblationSpec::Label(l) => parse_ablation(l),
            AblationSpec::Mask(m) => Ok(*m),
        }
    }
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// Experiment description. Relative paths are taken from the manifest's
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub task: Task,
    /// Required for IC and DST.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ontology: Option<PathBuf>,
    pub data: DataPaths,
    /// Domain allow-list; absent means every ontology domain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domains: Option<Vec<String>>,
    pub plan: SamplePlan,
    pub seeds: Vec<u64>,
    pub modes: Vec<Mode>,
    /// Prompt variants; empty means every catalog root in both expressions.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub prompts: Vec<PromptChoice>,
    /// CINS ablations; empty means the full instruction only.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ablations: Vec<AblationSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nlg_repr: Option<NlgRepr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_table: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub templates: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_catalog: Option<PathBuf>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

impl FromStr for Manifest {
    type Err = String;

    /// JSON when the text starts with `{`, TOML otherwise.
    fn from_str(text: &str) -> Result<Self, Self::Err> {
        if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| e.to_string())
        } else {
            toml::from_str(text).map_err(|e| e.to_string())
        }
    }
}

impl Manifest {
    /// Reads, resolves relative paths and validates.
    pub fn load(path: &Path) -> Result<Self, ManifestError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ManifestError::Io { path: path.to_path_buf(), source })?;
        let mut m: Manifest =
            text.parse().map_err(|message| ManifestError::Parse { path: path.to_path_buf(), message })?;
        m.resolve_paths(path.parent().unwrap_or(Path::new("")));
        m.validate()?;
        Ok(m)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.data {
            DataPaths::Single(p) => fix(p),
            DataPaths::Split { train, validation, test } => {
                fix(train);
                fix(validation);
                fix(test);
            }
        }
        for p in [&mut self.ontology, &mut self.template_table, &mut self.templates, &mut self.prompt_catalog].into_iter().flatten() {
            fix(p);
        }
        fix(&mut self.output_dir);
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn masks(&self) -> Vec<AblationMask> {
        if self.ablations.is_empty() {
            return vec![AblationMask::NONE];
        }
        self.ablations.iter().filter_map(|a| a.mask().ok()).collect()
    }

    /// Prompt variants after defaulting, in manifest (or catalog) order.
    pub fn variants(&self, catalog: &PromptCatalog) -> Vec<PromptChoice> {
        if self.prompts.is_empty() {
            variant_matrix(catalog, self.task)
        } else {
            self.prompts.clone()
        }
    }

    /// Checks that need no files. All problems are reported together.
    pub fn validate(&self) -> Result<(), ManifestError> {
        let mut problems = Vec::new();
        if self.seeds.is_empty() {
            problems.push("`seeds` is empty".to_string());
        }
        let mut seen = BTreeSet::new();
        for s in &self.seeds {
            if !seen.insert(s) {
                problems.push(format!("seed {s} is listed twice"));
            }
        }
        if self.modes.is_empty() {
            problems.push("`modes` is empty".into());
        }
        let mut seen = BTreeSet::new();
        for m in &self.modes {
            if !seen.insert(m) {
                problems.push(format!("mode {m} is listed twice"));
            }
        }
        if let Err(e) = self.plan.validate() {
            problems.push(e.to_string());
        }
        let expected = match self.task {
            Task::Ic => Strategy::KPerLabel,
            Task::Dst => Strategy::PercentDialogs,
            Task::Nlg => Strategy::KDialogsPerDomain,
        };
        if self.plan.strategy != expected {
            problems.push(format!("{} uses the `{expected}` strategy, not `{}`", self.task, self.plan.strategy));
        }
        match (&self.task, &self.data) {
            (Task::Ic, DataPaths::Split { .. }) => {
                problems.push("IC `data` is a single file with a split column".into())
            }
            (Task::Dst | Task::Nlg, DataPaths::Single(_)) => {
                problems.push(format!("{} `data` needs `train`, `validation` and `test` files", self.task))
            }
            _ => {}
        }
        if self.ontology.is_none() && self.task != Task::Nlg {
            problems.push(format!("{} needs an `ontology`", self.task));
        }
        if matches!(&self.domains, Some(d) if d.is_empty()) {
            problems.push("`domains` is empty; omit it to use every domain".into());
        }
        let mut masks = BTreeSet::new();
        for a in &self.ablations {
            match a.mask() {
                Ok(m) if !masks.insert(m) => problems.push(format!("ablation `{}` is listed twice", m.label())),
                Ok(_) => {}
                Err(e) => problems.push(e),
            }
        }
        if masks.iter().any(|m| !m.is_none()) && !self.modes.contains(&Mode::Cins) {
            problems.push("ablations need the CINS mode".into());
        }
        let mut prompts = BTreeSet::new();
        for p in &self.prompts {
            if !prompts.insert(p) {
                problems.push(format!("prompt {} is listed twice", p.label()));
            }
        }
        match (self.task, self.nlg_repr) {
            (Task::Nlg, Some(NlgRepr::T2g2)) if self.template_table.is_none() => {
                problems.push("the t2g2 representation needs a `template_table`".into())
            }
            (Task::Ic | Task::Dst, Some(_)) => problems.push("`nlg_repr` only applies to NLG".into()),
            _ => {}
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ManifestError::Invalid(problems))
        }
    }

    /// Checks prompt variants against the catalog in use.
    pub fn validate_prompts(&self, catalog: &PromptCatalog) -> Result<(), ManifestError> {
        let problems: Vec<String> = self
            .prompts
            .iter()
            .filter(|p| catalog.get(self.task, p).is_none())
            .map(|p| format!("prompt {} is not in the {} catalog", p.label(), self.task))
            .collect();
        let needs_prompt = self.modes.iter().any(|m| *m != Mode::Std);
        let mut problems = problems;
        if needs_prompt && self.variants(catalog).is_empty() {
            problems.push(format!("PE/CINS need prompts, and the catalog has none for {}", self.task));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ManifestError::Invalid(problems))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::PromptExpression;

    const IC: &str = r#"
task = "IC"
ontology = "ontology.json"
data = "intents.jsonl"
domains = ["bank"]
seeds = [0, 1, 2]
modes = ["STD", "PE", "CINS"]
prompts = [{ root = "intent", expression = "question" }]
ablations = ["full", "no-definition", { drop_prompt = true }]

[plan]
strategy = "k_per_label"
k_or_pct = 5
"#;

    #[test]
    fn parses_toml_and_resolves() {
        let mut m: Manifest = IC.parse().unwrap();
        m.validate().unwrap();
        m.resolve_paths(Path::new("/exp"));
        assert_eq!(m.ontology, Some(PathBuf::from("/exp/ontology.json")));
        assert_eq!(m.output_dir, PathBuf::from("/exp/out"));
        assert_eq!(m.masks().len(), 3);
        assert_eq!(m.prompts[0], PromptChoice::new("intent", PromptExpression::Question));
        let again: Manifest = m.to_toml().parse().unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn json_manifests_parse() {
        let m: Manifest = IC.parse().unwrap();
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(json.parse::<Manifest>().unwrap(), m);
    }

    #[test]
    fn duplicate_seeds_rejected() {
        let text = IC.replace("[0, 1, 2]", "[0, 1, 1]");
        let m: Manifest = text.parse().unwrap();
        match m.validate() {
            Err(ManifestError::Invalid(p)) => assert_eq!(p, vec!["seed 1 is listed twice"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn collects_every_problem() {
        let text = IC
            .replace("[0, 1, 2]", "[]")
            .replace("[\"STD\", \"PE\", \"CINS\"]", "[\"STD\"]")
            .replace("k_per_label", "percent_dialogs");
        let m: Manifest = text.parse().unwrap();
        let Err(ManifestError::Invalid(p)) = m.validate() else { panic!() };
        assert_eq!(p.len(), 3, "{p:?}");
    }

    #[test]
    fn unknown_keys_and_labels() {
        assert!(format!("extra = 1\n{IC}").parse::<Manifest>().is_err());
        assert!(format!("{IC}\nseeed = 1").parse::<Manifest>().is_err());
        assert_eq!(parse_ablation("no-constraint+no-prompt").unwrap().label(), "no-constraint+no-prompt");
        assert!(parse_ablation("no-everything").is_err());
        for m in AblationMask::standard_grid() {
            assert_eq!(parse_ablation(&m.label()).unwrap(), m);
        }
    }

    #[test]
    fn prompts_checked_against_catalog() {
        let m: Manifest = IC.replace("\"intent\"", "\"nope\"").parse().unwrap();
        assert!(m.validate_prompts(&PromptCatalog::default()).is_err());
        let m: Manifest = IC.parse().unwrap();
        m.validate_prompts(&PromptCatalog::default()).unwrap();
    }
}
