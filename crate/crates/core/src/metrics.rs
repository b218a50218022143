//! Task metrics and cross-seed aggregation.
//!
//! Every comparison goes through [`normalize_label`]. BLEU is corpus-level
//! BLEU-4 over a case-sensitive tokenizer that splits every
//! non-alphanumeric, non-space character into its own token. Orders with no
//! matches in the whole corpus use `(m + 1) / (t + 1)` in place of `m / t`.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::{normalize_label, DialogActFrame, DialogState, Task, NONE_VALUE};

pub const ACCURACY: &str = "accuracy";
pub const OUT_OF_LABELSET: &str = "out_of_labelset_rate";
pub const JGA: &str = "jga";
pub const SER: &str = "ser";
pub const BLEU: &str = "bleu";

/// Pinned BLEU variant, written into every report.
pub const BLEU_VARIANT: &str = "corpus-bleu4/punct-split/case-sensitive/add-one-on-zero-match-orders";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("length mismatch: {left} predictions vs {right} references")]
    LengthMismatch { left: usize, right: usize },
    #[error("nothing to score")]
    Empty,
    #[error("runs disagree: {0}")]
    Heterogeneous(String),
}

fn aligned(left: usize, right: usize) -> Result<(), MetricsError> {
    if left != right {
        Err(MetricsError::LengthMismatch { left, right })
    } else if left == 0 {
        Err(MetricsError::Empty)
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntentScores {
    pub accuracy: f64,
    /// Share of predictions that name no label of the labelset.
    pub out_of_labelset_rate: f64,
}

/// Accuracy plus out-of-labelset rate. An empty `labelset` disables the
/// labelset check.
pub fn intent_scores<P, G, L>(predictions: &[P], golds: &[G], labelset: &[L]) -> Result<IntentScores, MetricsError>
where
    P: AsRef<str>,
    G: AsRef<str>,
    L: AsRef<str>,
{
    aligned(predictions.len(), golds.len())?;
    let labels: BTreeSet<String> = labelset.iter().map(|l| normalize_label(l.as_ref())).collect();
    let (mut correct, mut outside) = (0usize, 0usize);
    for (p, g) in predictions.iter().zip(golds) {
        let p = normalize_label(p.as_ref());
        if !labels.is_empty() && !labels.contains(&p) {
            outside += 1;
        } else if p == normalize_label(g.as_ref()) {
            correct += 1;
        }
    }
    let n = predictions.len() as f64;
    Ok(IntentScores { accuracy: correct as f64 / n, out_of_labelset_rate: outside as f64 / n })
}

pub fn intent_accuracy<P, G, L>(predictions: &[P], golds: &[G], labelset: &[L]) -> Result<f64, MetricsError>
where
    P: AsRef<str>,
    G: AsRef<str>,
    L: AsRef<str>,
{
    intent_scores(predictions, golds, labelset).map(|s| s.accuracy)
}

/// Whether two states agree on every slot either mentions, absent slots
/// reading as `none`.
pub fn states_match(pred: &DialogState, gold: &DialogState) -> bool {
    pred.entries
        .keys()
        .chain(gold.entries.keys())
        .all(|k| normalize_label(pred.value(k)) == normalize_label(gold.value(k)))
}

pub fn joint_goal_accuracy(pred_states: &[DialogState], gold_states: &[DialogState]) -> Result<f64, MetricsError> {
    aligned(pred_states.len(), gold_states.len())?;
    let hits = pred_states.iter().zip(gold_states).filter(|(p, g)| states_match(p, g)).count();
    Ok(hits as f64 / pred_states.len() as f64)
}

/// Whether `output` misses a slot value of `frames`. Value-less slots are
/// not checked.
pub fn output_errs(output: &str, frames: &[DialogActFrame]) -> bool {
    let text = normalize_label(output);
    frames
        .iter()
        .flat_map(|f| &f.slot_values)
        .filter_map(|sv| sv.value.as_deref())
        .any(|v| !text.contains(&normalize_label(v)))
}

pub fn slot_error_rate<S, F>(outputs: &[S], frames: &[F]) -> Result<f64, MetricsError>
where
    S: AsRef<str>,
    F: AsRef<[DialogActFrame]>,
{
    aligned(outputs.len(), frames.len())?;
    let errs = outputs.iter().zip(frames).filter(|(o, f)| output_errs(o.as_ref(), f.as_ref())).count();
    Ok(errs as f64 / outputs.len() as f64)
}

/// Alphanumeric runs, and every other non-space character alone.
pub fn bleu_tokenize(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in text.char_indices() {
        if ch.is_alphanumeric() {
            start.get_or_insert(i);
            continue;
        }
        if let Some(s) = start.take() {
            out.push(&text[s..i]);
        }
        if !ch.is_whitespace() {
            out.push(&text[i..i + ch.len_utf8()]);
        }
    }
    if let Some(s) = start {
        out.push(&text[s..]);
    }
    out
}

pub const MAX_ORDER: usize = 4;

/// Sufficient statistics for corpus BLEU. Shards merge by addition.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BleuStats {
    pub matches: [u64; MAX_ORDER],
    pub totals: [u64; MAX_ORDER],
    pub hyp_len: u64,
    pub ref_len: u64,
}

impl BleuStats {
    pub fn from_pair(hypothesis: &str, reference: &str) -> Self {
        let h = bleu_tokenize(hypothesis);
        let r = bleu_tokenize(reference);
        let mut stats = BleuStats { hyp_len: h.len() as u64, ref_len: r.len() as u64, ..Default::default() };
        for n in 1..=MAX_ORDER {
            if h.len() < n {
                continue;
            }
            let mut ref_counts: BTreeMap<&[&str], u64> = BTreeMap::new();
            for g in r.windows(n) {
                *ref_counts.entry(g).or_default() += 1;
            }
            let mut hyp_counts: BTreeMap<&[&str], u64> = BTreeMap::new();
            for g in h.windows(n) {
                *hyp_counts.entry(g).or_default() += 1;
            }
            stats.totals[n - 1] = (h.len() + 1 - n) as u64;
            stats.matches[n - 1] =
                hyp_counts.iter().map(|(g, c)| (*c).min(ref_counts.get(g).copied().unwrap_or(0))).sum();
        }
        stats
    }

    pub fn merge(mut self, other: Self) -> Self {
        for n in 0..MAX_ORDER {
            self.matches[n] += other.matches[n];
            self.totals[n] += other.totals[n];
        }
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
        self
    }

    pub fn score(&self) -> f64 {
        if self.hyp_len == 0 {
            return 0.0;
        }
        let log_sum: f64 = (0..MAX_ORDER)
            .map(|n| {
                let (m, t) = (self.matches[n] as f64, self.totals[n] as f64);
                if self.matches[n] == 0 { ((m + 1.0) / (t + 1.0)).ln() } else { (m / t).ln() }
            })
            .sum();
        let (c, r) = (self.hyp_len as f64, self.ref_len as f64);
        let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
        bp * (log_sum / MAX_ORDER as f64).exp()
    }
}

pub fn bleu_stats<H, R>(hypotheses: &[H], references: &[R]) -> Result<BleuStats, MetricsError>
where
    H: AsRef<str> + Sync,
    R: AsRef<str> + Sync,
{
    aligned(hypotheses.len(), references.len())?;
    Ok(hypotheses
        .par_iter()
        .zip(references)
        .map(|(h, r)| BleuStats::from_pair(h.as_ref(), r.as_ref()))
        .reduce(BleuStats::default, BleuStats::merge))
}

pub fn corpus_bleu<H, R>(hypotheses: &[H], references: &[R]) -> Result<f64, MetricsError>
where
    H: AsRef<str> + Sync,
    R: AsRef<str> + Sync,
{
    bleu_stats(hypotheses, references).map(|s| s.score())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunScores {
    pub task: Task,
    pub seed: u64,
    pub n: usize,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub values: Vec<f64>,
}

impl MetricSummary {
    pub fn of(values: Vec<f64>) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt(), values }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateScores {
    pub task: Task,
    pub seeds: Vec<u64>,
    pub metrics: BTreeMap<String, MetricSummary>,
}

pub fn aggregate(runs: &[RunScores]) -> Result<AggregateScores, MetricsError> {
    let first = runs.first().ok_or(MetricsError::Empty)?;
    for r in runs {
        if r.task != first.task {
            return Err(MetricsError::Heterogeneous(format!("tasks {} and {}", first.task, r.task)));
        }
        if !r.metrics.keys().eq(first.metrics.keys()) {
            let names = |r: &RunScores| r.metrics.keys().cloned().collect::<Vec<_>>().join(",");
            return Err(MetricsError::Heterogeneous(format!("metric sets [{}] and [{}]", names(first), names(r))));
        }
    }
    let metrics = first
        .metrics
        .keys()
        .map(|name| (name.clone(), MetricSummary::of(runs.iter().map(|r| r.metrics[name]).collect())))
        .collect();
    Ok(AggregateScores { task: first.task, seeds: runs.iter().map(|r| r.seed).collect(), metrics })
}

/// Reads a generated DST value; blank output counts as `none`.
pub fn prediction_value(raw: &str) -> &str {
    let v = raw.trim();
    if v.is_empty() {
        NONE_VALUE
    } else {
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::SlotKey;
    use proptest::prelude::*;

    fn state(entries: &[(&str, &str, &str)]) -> DialogState {
        let mut s = DialogState::new();
        for (d, k, v) in entries {
            s.insert(SlotKey::new(*d, *k), *v);
        }
        s
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(intent_accuracy(&["a", "b"], &["a", "b"], &[] as &[&str]).unwrap(), 1.0);
        assert_eq!(intent_accuracy(&["Book_Hotel"], &["book hotel"], &["book hotel"]).unwrap(), 1.0);
        assert_eq!(intent_accuracy(&["a", "b", "c", "x"], &["a", "b", "c", "d"], &[] as &[&str]).unwrap(), 0.75);
        let s = intent_scores(&["a", "zzz"], &["a", "b"], &["a", "b"]).unwrap();
        assert_eq!((s.accuracy, s.out_of_labelset_rate), (0.5, 0.5));
        assert_eq!(
            intent_accuracy(&["a"], &["a", "b"], &[] as &[&str]),
            Err(MetricsError::LengthMismatch { left: 1, right: 2 })
        );
        assert_eq!(intent_accuracy(&[] as &[&str], &[] as &[&str], &[] as &[&str]), Err(MetricsError::Empty));
    }

    #[test]
    fn jga_examples() {
        let g = vec![state(&[("hotel", "area", "north")]), state(&[("hotel", "area", "north"), ("hotel", "stars", "5")])];
        assert_eq!(joint_goal_accuracy(&g, &g).unwrap(), 1.0);
        let p = vec![g[0].clone(), state(&[("hotel", "area", "north"), ("hotel", "stars", "4")])];
        assert_eq!(joint_goal_accuracy(&p, &g).unwrap(), 0.5);
        let explicit_none = vec![state(&[("hotel", "area", "North"), ("taxi", "leave at", "none")])];
        assert_eq!(joint_goal_accuracy(&explicit_none, &g[..1]).unwrap(), 1.0);
    }

    #[test]
    fn ser_examples() {
        let f = |v: &str| vec![DialogActFrame::new("INFORM").with("name", v)];
        let frames = vec![f("Rosewood"), f("Blue Moon"), f("the_alley"), f("Zen")];
        let outs = ["The Rosewood.", "blue   moon is fine", "The Alley.", "no idea"];
        assert_eq!(slot_error_rate(&outs, &frames).unwrap(), 0.25);
        let valueless = vec![vec![DialogActFrame::new("REQUEST").with_slot("time")]];
        assert_eq!(slot_error_rate(&["what?"], &valueless).unwrap(), 0.0);
    }

    #[test]
    fn tokenizer() {
        assert_eq!(bleu_tokenize("It's a 5-star hotel."), vec!["It", "'", "s", "a", "5", "-", "star", "hotel", "."]);
        assert_eq!(bleu_tokenize("  café,ok "), vec!["café", ",", "ok"]);
        assert!(bleu_tokenize("   ").is_empty());
    }

    // Frozen from a separate hand/script computation: matches [10, 5, 2, 0]
    // over totals [13, 11, 9, 7], c = 13, r = 15.
    const TOY_BLEU: f64 = 0.269164841153654;

    #[test]
    fn bleu_toy_corpus() {
        let h = ["the hotel is in the north of town.", "it has free wifi"];
        let r = ["the hotel is located in the north.", "it offers free wifi and parking."];
        let s = bleu_stats(&h, &r).unwrap();
        assert_eq!(s.matches, [10, 5, 2, 0]);
        assert_eq!(s.totals, [13, 11, 9, 7]);
        assert_eq!((s.hyp_len, s.ref_len), (13, 15));
        assert!((s.score() - TOY_BLEU).abs() < 1e-9);
    }

    #[test]
    fn bleu_edges() {
        assert_eq!(corpus_bleu(&["a b c"], &["a b c"]).unwrap(), 1.0);
        assert_eq!(corpus_bleu(&[""], &["a b"]).unwrap(), 0.0);
        let disjoint = corpus_bleu(&["x y z w v"], &["a b c d e"]).unwrap();
        // every order smoothed: (1/6 * 1/5 * 1/4 * 1/3)^(1/4)
        assert!((disjoint - (1.0f64 / 360.0).powf(0.25)).abs() < 1e-12);
    }

    #[test]
    fn aggregate_examples() {
        let run = |seed, v| RunScores { task: Task::Ic, seed, n: 10, metrics: [(ACCURACY.to_string(), v)].into() };
        let a = aggregate(&[run(0, 0.2), run(1, 0.4), run(2, 0.6)]).unwrap();
        let m = &a.metrics[ACCURACY];
        assert!((m.mean - 0.4).abs() < 1e-12);
        assert!((m.std - (0.08f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((m.std - 0.1633).abs() < 1e-4);
        assert_eq!(aggregate(&[run(0, 0.7)]).unwrap().metrics[ACCURACY].std, 0.0);
        assert_eq!(aggregate(&[]), Err(MetricsError::Empty));
        let mut other = run(1, 0.1);
        other.metrics.insert(BLEU.into(), 0.3);
        assert!(matches!(aggregate(&[run(0, 0.2), other]), Err(MetricsError::Heterogeneous(_))));
    }

    fn word() -> impl Strategy<Value = String> {
        prop::sample::select(vec!["the", "hotel", "is", "north", "cheap", ".", "a", "b"]).prop_map(str::to_string)
    }

    fn sentence() -> impl Strategy<Value = String> {
        prop::collection::vec(word(), 1..10).prop_map(|w| w.join(" "))
    }

    proptest! {
        #[test]
        fn bleu_identity(h in prop::collection::vec(sentence(), 1..6)) {
            prop_assert_eq!(corpus_bleu(&h, &h).unwrap(), 1.0);
        }

        #[test]
        fn bleu_order_invariant_and_shardable(pairs in prop::collection::vec((sentence(), sentence()), 1..8), rot in 0usize..8) {
            let (h, r): (Vec<String>, Vec<String>) = pairs.iter().cloned().unzip();
            let mut rotated = pairs.clone();
            rotated.rotate_left(rot % pairs.len());
            let (h2, r2): (Vec<String>, Vec<String>) = rotated.into_iter().unzip();
            let whole = bleu_stats(&h, &r).unwrap();
            prop_assert_eq!(whole, bleu_stats(&h2, &r2).unwrap());
            let cut = pairs.len() / 2;
            if cut > 0 {
                let merged = bleu_stats(&h[..cut], &r[..cut]).unwrap().merge(bleu_stats(&h[cut..], &r[cut..]).unwrap());
                prop_assert_eq!(merged, whole);
            }
            let b = whole.score();
            prop_assert!((0.0..=1.0).contains(&b));
        }

        #[test]
        fn aggregate_permutation_invariant(values in prop::collection::vec(0.0f64..1.0, 1..6), rot in 0usize..6) {
            let runs: Vec<RunScores> = values.iter().enumerate()
                .map(|(i, v)| RunScores { task: Task::Dst, seed: i as u64, n: 1, metrics: [(JGA.to_string(), *v)].into() })
                .collect();
            let mut rotated = runs.clone();
            rotated.rotate_left(rot % runs.len());
            let a = aggregate(&runs).unwrap().metrics[JGA].clone();
            let b = aggregate(&rotated).unwrap().metrics[JGA].clone();
            prop_assert!((a.mean - b.mean).abs() < 1e-12);
            prop_assert!(a.std >= 0.0);
        }

        #[test]
        fn jga_bounded_by_slot_accuracy(
            turns in prop::collection::vec(
                (prop::collection::vec(prop::sample::select(vec!["none", "a", "b"]), 3),
                 prop::collection::vec(prop::sample::select(vec!["none", "a", "b"]), 3)),
                1..8)
        ) {
            let slots = ["x", "y", "z"];
            let mk = |vals: &Vec<&str>| {
                let mut s = DialogState::new();
                for (slot, v) in slots.iter().zip(vals) {
                    if *v != "none" { s.insert(SlotKey::new("d", *slot), *v); }
                }
                s
            };
            let pred: Vec<DialogState> = turns.iter().map(|(p, _)| mk(p)).collect();
            let gold: Vec<DialogState> = turns.iter().map(|(_, g)| mk(g)).collect();
            let jga = joint_goal_accuracy(&pred, &gold).unwrap();
            for i in 0..3 {
                let acc = turns.iter().filter(|(p, g)| p[i] == g[i]).count() as f64 / turns.len() as f64;
                prop_assert!(jga <= acc + 1e-12);
            }
        }
    }
}
