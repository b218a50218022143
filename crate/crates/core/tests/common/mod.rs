//! Fixture paths, manifest builders and output helpers shared by the
//! integration targets.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use tod_instruct::experiment::{gold_predictions, run_score, write_scores, Manifest, RunSummary};
use tod_instruct::ingest::Split;
use tod_instruct::{Ontology, TemplateTable};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn ontology(name: &str) -> Ontology {
    serde_json::from_str(&fs::read_to_string(fixture(name)).unwrap()).unwrap()
}

pub fn table() -> TemplateTable {
    TemplateTable::from_json(&fs::read_to_string(fixture("nlg_templates.json")).unwrap()).unwrap()
}

pub fn manifest(task: &str, extra: &str) -> Manifest {
    let f = |n: &str| fixture(n).display().to_string();
    let body = match task {
        "IC" => format!(
            "task = \"IC\"\nontology = {:?}\ndata = {:?}\ndomains = [\"bank\"]\n[plan]\nstrategy = \"k_per_label\"\nk_or_pct = 5\n",
            f("intent_ontology.json"),
            f("intents.jsonl")
        ),
        "DST" => format!(
            "task = \"DST\"\nontology = {:?}\ndomains = [\"hotel\", \"taxi\", \"restaurant\"]\ndata = {{ train = {:?}, validation = {:?}, test = {:?} }}\n[plan]\nstrategy = \"percent_dialogs\"\nk_or_pct = 10\n",
            f("dst_ontology.json"),
            f("dst/train.jsonl"),
            f("dst/validation.jsonl"),
            f("dst/test.jsonl")
        ),
        _ => format!(
            "task = \"NLG\"\nnlg_repr = \"t2g2\"\ntemplate_table = {:?}\ndata = {{ train = {:?}, validation = {:?}, test = {:?} }}\n[plan]\nstrategy = \"k_dialogs_per_domain\"\nk_or_pct = 2\n",
            f("nlg_templates.json"),
            f("nlg/train.jsonl"),
            f("nlg/validation.jsonl"),
            f("nlg/test.jsonl")
        ),
    };
    // top-level keys must precede the [plan] table
    let text = format!("{extra}\n{body}");
    let m: Manifest = text.parse().unwrap_or_else(|e| panic!("{e}\n{text}"));
    m.validate().unwrap();
    m
}

pub fn score_gold(out: &Path, summary: &RunSummary) {
    for c in &summary.cells {
        let dir = out.join(&c.cell_id);
        for split in [Split::Test, Split::Validation] {
            let preds = gold_predictions(&dir, split).unwrap();
            write_scores(&dir, split, &run_score(&dir, &preds, split).unwrap()).unwrap();
        }
    }
}

pub fn tree_hashes(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().display().to_string(), fs::read(&p).unwrap());
            }
        }
    }
    out
}
