//! Synthetic inputs shared by the benchmarks.

use tod_instruct::ingest::{DstDialog, IntentExample, NlgItem};
use tod_instruct::{render_naive, DialogActFrame, DomainSpec, IntentSpec, Ontology, TemplateTable};

const ACTS: [&str; 4] = ["INFORM", "OFFER", "CONFIRM", "REQUEST"];
const SLOTS: [&str; 5] = ["name", "area", "price", "time", "people"];
const VALUES: [&str; 6] = ["Rosewood", "north", "$120", "10:30 am", "The Alley, Inn", "Casa \"Verde\""];

/// Cheap deterministic mixing so builders need no RNG.
fn mix(i: usize, salt: usize) -> usize {
    (i.wrapping_mul(2_654_435_761) ^ salt.wrapping_mul(40_503)) >> 3
}

pub fn frame_lists(n: usize) -> Vec<Vec<DialogActFrame>> {
    (0..n)
        .map(|i| {
            (0..1 + mix(i, 1) % 3)
                .map(|j| {
                    let act = ACTS[mix(i + j, 2) % ACTS.len()];
                    let mut f = DialogActFrame::new(act);
                    for k in 0..1 + mix(i + j, 3) % 3 {
                        let slot = SLOTS[(mix(i, 4) + k) % SLOTS.len()];
                        f = if act == "REQUEST" { f.with_slot(slot) } else { f.with(slot, VALUES[mix(i + k, 5) % VALUES.len()]) };
                    }
                    f
                })
                .collect()
        })
        .collect()
}

pub fn naive_strings(frames: &[Vec<DialogActFrame>]) -> Vec<String> {
    frames.iter().map(|f| render_naive(f).expect("non-empty frames")).collect()
}

/// A template for every (act, slot) pair the builders can produce.
pub fn template_table() -> TemplateTable {
    let mut t = TemplateTable::new();
    for act in ACTS {
        for slot in SLOTS {
            let tpl = if act == "REQUEST" { format!("Which {slot}?") } else { format!("The {slot} is {{value}}.") };
            t.insert(act, Some(slot), &tpl).expect("one placeholder");
        }
    }
    t
}

pub fn ontology(domains: usize, intents: usize) -> Ontology {
    Ontology {
        name: "synthetic".into(),
        version: "1".into(),
        domains: (0..domains)
            .map(|d| DomainSpec {
                name: format!("domain{d}"),
                intents: (0..intents)
                    .map(|i| IntentSpec { name: format!("intent {d} {i}"), description: format!("asks for thing {i} in area {d}") })
                    .collect(),
                slots: vec![],
            })
            .collect(),
    }
}

pub fn intent_examples(labels: usize, per_label: usize) -> Vec<IntentExample> {
    (0..labels * per_label)
        .map(|i| IntentExample {
            id: format!("ex{i:07}"),
            utterance: format!("please help me with request number {i}"),
            intent: format!("intent 0 {}", i % labels),
            domain: "domain0".into(),
        })
        .collect()
}

pub fn dialogs(n: usize) -> Vec<DstDialog> {
    (0..n).map(|i| DstDialog { id: format!("D{i:06}"), turns: vec![], states: vec![] }).collect()
}

/// `per_domain` single-item dialogs in each of `domains` domains.
pub fn nlg_items(domains: usize, per_domain: usize) -> Vec<NlgItem> {
    let frames = frame_lists(domains * per_domain);
    frames
        .into_iter()
        .enumerate()
        .map(|(i, f)| NlgItem {
            id: format!("n{i}"),
            reference: naive_strings(std::slice::from_ref(&f)).remove(0),
            frames: f,
            domain: format!("Domain_{}", i % domains),
            dialog_id: format!("d{i}"),
        })
        .collect()
}

/// Hypothesis/reference pairs sharing most tokens.
pub fn bleu_corpus(n: usize) -> (Vec<String>, Vec<String>) {
    (0..n)
        .map(|i| {
            let r = format!("the {} hotel in the {} costs {} per night.", VALUES[i % 6], SLOTS[i % 5], i);
            let h = format!("the {} hotel is in the {} and costs {}.", VALUES[i % 6], SLOTS[(i + 1) % 5], i);
            (h, r)
        })
        .unzip()
}
