//! Seeded few-shot sampling.
//!
//! All draws come from PCG64 (`Lcg128Xsl64`, seeded with `seed_from_u64`).
//! Integers below `n` are drawn by rejection on `next_u64`, and subsets by a
//! partial Fisher-Yates shuffle over ids sorted bytewise. Input order
//! therefore never matters, and any implementation of the same three steps
//! reproduces the splits. Returned ids are sorted.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand_core::{Rng, SeedableRng};
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ingest::{DstDialog, IntentExample, NlgItem};

pub const PRNG: &str = "pcg64-lcg128xsl64/seed_from_u64/rejection-u64/partial-fisher-yates";
pub const ROUNDING: &str = "floor";
/// Resampling budget for `required_coverage`.
pub const COVERAGE_ATTEMPTS: usize = 200;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SampleError {
    #[error("invalid sample plan: {0}")]
    InvalidPlan(String),
    #[error("label `{label}` has {available} examples, fewer than k = {k}")]
    InsufficientLabel { label: String, available: usize, k: usize },
    #[error("domain `{domain}` has {available} dialogs, fewer than k = {k}")]
    InsufficientDomain { domain: String, available: usize, k: usize },
    #[error("{pct}% of {n} dialogs rounds down to 0")]
    EmptySample { pct: f64, n: usize },
    #[error("no sample out of {attempts} covered every (act, slot); still missing: {}", fmt_missing(missing))]
    Coverage { attempts: usize, missing: Vec<(String, Option<String>)> },
    #[error("validation has {available} {what}, {needed} needed")]
    InsufficientValidation { what: String, available: usize, needed: usize },
    #[error("split manifest: {0}")]
    Manifest(String),
}

fn fmt_missing(pairs: &[(String, Option<String>)]) -> String {
    pairs
        .iter()
        .map(|(a, s)| format!("({a}, {})", s.as_deref().unwrap_or("-")))
        .collect::<Vec<_>>()
        .join(", ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    KPerLabel,
    PercentDialogs,
    KDialogsPerDomain,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::KPerLabel => "k_per_label",
            Strategy::PercentDialogs => "percent_dialogs",
            Strategy::KDialogsPerDomain => "k_dialogs_per_domain",
        })
    }
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplePlan {
    pub strategy: Strategy,
    pub k_or_pct: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "yes")]
    pub match_validation: bool,
    /// Only read by `k_dialogs_per_domain`.
    #[serde(default = "yes")]
    pub required_coverage: bool,
}

impl SamplePlan {
    pub fn new(strategy: Strategy, k_or_pct: f64, seed: u64) -> Self {
        Self { strategy, k_or_pct, seed, match_validation: true, required_coverage: true }
    }

    pub fn validate(&self) -> Result<(), SampleError> {
        let v = self.k_or_pct;
        if !(v.is_finite() && v > 0.0) {
            return Err(SampleError::InvalidPlan(format!("k_or_pct must be positive, got {v}")));
        }
        match self.strategy {
            Strategy::PercentDialogs if v > 100.0 => {
                Err(SampleError::InvalidPlan(format!("percentage must be in (0, 100], got {v}")))
            }
            Strategy::KPerLabel | Strategy::KDialogsPerDomain if v.fract() != 0.0 => {
                Err(SampleError::InvalidPlan(format!("k must be a whole number, got {v}")))
            }
            _ => Ok(()),
        }
    }

    /// `k` for the count strategies. Call after [`validate`](Self::validate).
    pub fn k(&self) -> usize {
        self.k_or_pct as usize
    }
}

/// Uniform index draws on top of PCG64.
pub struct Draws(Pcg64);

impl Draws {
    pub fn new(seed: u64) -> Self {
        Self(Pcg64::seed_from_u64(seed))
    }

    /// Uniform in `0..n` by rejection, `n > 0`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        let zone = u64::MAX - (u64::MAX - n + 1) % n;
        loop {
            let x = self.0.next_u64();
            if x <= zone {
                return x % n;
            }
        }
    }

    /// `k` distinct elements of `items` (already in canonical order), in draw
    /// order.
    pub fn choose<T: Clone>(&mut self, items: &[T], k: usize) -> Vec<T> {
        assert!(k <= items.len());
        let mut pool = items.to_vec();
        for i in 0..k {
            let j = i + self.below((pool.len() - i) as u64) as usize;
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }
}

fn sorted_unique<'a>(ids: impl IntoIterator<Item = &'a str>) -> Vec<String> {
    ids.into_iter().map(str::to_string).collect::<BTreeSet<_>>().into_iter().collect()
}

fn group<'a, T>(
    items: &'a [T],
    key: impl Fn(&'a T) -> &'a str,
    id: impl Fn(&'a T) -> &'a str,
) -> BTreeMap<&'a str, Vec<String>> {
    let mut groups: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for item in items {
        groups.entry(key(item)).or_default().insert(id(item));
    }
    groups.into_iter().map(|(k, ids)| (k, ids.into_iter().map(str::to_string).collect())).collect()
}

/// Exactly `k` examples of every intent label, labels visited in sorted order.
pub fn sample_k_per_label(examples: &[IntentExample], k: usize, seed: u64) -> Result<Vec<String>, SampleError> {
    if k == 0 {
        return Err(SampleError::InvalidPlan("k must be at least 1".into()));
    }
    let mut draws = Draws::new(seed);
    let mut out = Vec::new();
    for (label, ids) in group(examples, |e| &e.intent, |e| &e.id) {
        if ids.len() < k {
            return Err(SampleError::InsufficientLabel { label: label.to_string(), available: ids.len(), k });
        }
        out.extend(draws.choose(&ids, k));
    }
    out.sort();
    Ok(out)
}

/// Number of dialogs kept by a percentage plan.
pub fn percent_count(pct: f64, n: usize) -> usize {
    // the epsilon absorbs representation error, e.g. 0.05 * 8420
    ((pct * n as f64) / 100.0 + 1e-9).floor() as usize
}

/// `floor(pct/100 × |dialogs|)` whole dialogs.
pub fn sample_percent_dialogs(dialogs: &[DstDialog], pct: f64, seed: u64) -> Result<Vec<String>, SampleError> {
    if !(pct > 0.0 && pct <= 100.0) {
        return Err(SampleError::InvalidPlan(format!("percentage must be in (0, 100], got {pct}")));
    }
    let ids = sorted_unique(dialogs.iter().map(|d| d.id.as_str()));
    let n = percent_count(pct, ids.len());
    if n == 0 {
        return Err(SampleError::EmptySample { pct, n: ids.len() });
    }
    let mut out = Draws::new(seed).choose(&ids, n);
    out.sort();
    Ok(out)
}

/// Dialog id to domain; a dialog's domain is that of its first item.
pub fn dialog_domains(items: &[NlgItem]) -> BTreeMap<&str, &str> {
    let mut out = BTreeMap::new();
    for item in items {
        out.entry(item.dialog_id.as_str()).or_insert(item.domain.as_str());
    }
    out
}

/// `k` dialogs per domain. With `required_coverage`, redraws (up to
/// [`COVERAGE_ATTEMPTS`] times, continuing the same stream) until the chosen
/// dialogs mention every `(act, slot)` pair present in `items`.
pub fn sample_k_dialogs_per_domain(
    items: &[NlgItem],
    k: usize,
    seed: u64,
    required_coverage: bool,
) -> Result<Vec<String>, SampleError> {
    if k == 0 {
        return Err(SampleError::InvalidPlan("k must be at least 1".into()));
    }
    let domains = dialog_domains(items);
    let mut by_domain: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for (dialog, domain) in &domains {
        by_domain.entry(domain).or_default().push(dialog.to_string());
    }
    for (domain, dialogs) in &by_domain {
        if dialogs.len() < k {
            return Err(SampleError::InsufficientDomain { domain: domain.to_string(), available: dialogs.len(), k });
        }
    }
    let pairs_of = |dialogs: &BTreeSet<&str>| -> BTreeSet<(String, Option<String>)> {
        items
            .iter()
            .filter(|i| dialogs.contains(i.dialog_id.as_str()))
            .flat_map(|i| i.frames.iter().flat_map(|f| f.template_keys()))
            .collect()
    };
    let all: BTreeSet<&str> = domains.keys().copied().collect();
    let universe = pairs_of(&all);

    let mut draws = Draws::new(seed);
    let mut best: Option<Vec<(String, Option<String>)>> = None;
    let attempts = if required_coverage { COVERAGE_ATTEMPTS } else { 1 };
    for _ in 0..attempts {
        let mut chosen: Vec<String> = by_domain.values().flat_map(|ids| draws.choose(ids, k)).collect();
        chosen.sort();
        if !required_coverage {
            return Ok(chosen);
        }
        let set: BTreeSet<&str> = chosen.iter().map(String::as_str).collect();
        let covered = pairs_of(&set);
        let missing: Vec<_> = universe.difference(&covered).cloned().collect();
        if missing.is_empty() {
            return Ok(chosen);
        }
        if best.as_ref().is_none_or(|b| missing.len() < b.len()) {
            best = Some(missing);
        }
    }
    Err(SampleError::Coverage { attempts, missing: best.unwrap_or_default() })
}

/// Per-label matched validation: for every label, as many validation examples
/// as the training split holds.
pub fn match_validation_per_label(
    validation: &[IntentExample],
    train_label_counts: &BTreeMap<String, usize>,
    seed: u64,
) -> Result<Vec<String>, SampleError> {
    let groups = group(validation, |e| &e.intent, |e| &e.id);
    let mut draws = Draws::new(seed);
    let mut out = Vec::new();
    for (label, &need) in train_label_counts {
        let ids = groups.get(label.as_str()).map(Vec::as_slice).unwrap_or(&[]);
        if ids.len() < need {
            return Err(SampleError::InsufficientValidation {
                what: format!("examples of `{label}`"),
                available: ids.len(),
                needed: need,
            });
        }
        out.extend(draws.choose(ids, need));
    }
    out.sort();
    Ok(out)
}

/// Uniform matched validation over units (examples or dialogs).
pub fn match_validation_uniform<'a>(
    validation_ids: impl IntoIterator<Item = &'a str>,
    train_size: usize,
    seed: u64,
) -> Result<Vec<String>, SampleError> {
    let ids = sorted_unique(validation_ids);
    if ids.len() < train_size {
        return Err(SampleError::InsufficientValidation {
            what: "units".into(),
            available: ids.len(),
            needed: train_size,
        });
    }
    let mut out = Draws::new(seed).choose(&ids, train_size);
    out.sort();
    Ok(out)
}

pub fn label_counts<'a>(examples: impl IntoIterator<Item = &'a IntentExample>) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for e in examples {
        *counts.entry(e.intent.clone()).or_insert(0) += 1;
    }
    counts
}

/// SHA-256 of the canonical JSON encoding, lowercase hex.
pub fn content_hash<T: Serialize + ?Sized>(value: &T) -> String {
    sha256_hex(&serde_json::to_vec(value).expect("in-memory values serialize"))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// What the ids in a manifest refer to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    Example,
    Dialog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub plan: SamplePlan,
    pub seed: u64,
    pub dataset_hash: String,
    pub unit: Unit,
    pub prng: String,
    pub rounding: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct ManifestLine {
    split: String,
    id: String,
}

/// Sampled train and validation ids. The test split is always used whole
/// and is not listed.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitManifest {
    pub header: ManifestHeader,
    pub train: Vec<String>,
    pub validation: Vec<String>,
}

impl SplitManifest {
    pub fn new(plan: &SamplePlan, dataset_hash: String, unit: Unit, train: Vec<String>, validation: Vec<String>) -> Self {
        Self {
            header: ManifestHeader {
                plan: plan.clone(),
                seed: plan.seed,
                dataset_hash,
                unit,
                prng: PRNG.into(),
                rounding: ROUNDING.into(),
            },
            train,
            validation,
        }
    }

    /// Header line, then one `{"split", "id"}` line per id.
    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for (split, ids) in [("train", &self.train), ("validation", &self.validation)] {
            for id in ids {
                let line = ManifestLine { split: split.into(), id: id.clone() };
                out.push_str(&serde_json::to_string(&line).expect("line serializes"));
                out.push('\n');
            }
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, SampleError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: ManifestHeader = serde_json::from_str(lines.next().ok_or_else(|| SampleError::Manifest("empty".into()))?)
            .map_err(|e| SampleError::Manifest(format!("header: {e}")))?;
        let (mut train, mut validation) = (Vec::new(), Vec::new());
        for (i, l) in lines.enumerate() {
            let line: ManifestLine =
                serde_json::from_str(l).map_err(|e| SampleError::Manifest(format!("record {}: {e}", i + 1)))?;
            match line.split.as_str() {
                "train" => train.push(line.id),
                "validation" => validation.push(line.id),
                other => return Err(SampleError::Manifest(format!("unknown split `{other}`"))),
            }
        }
        Ok(Self { header, train, validation })
    }
}
