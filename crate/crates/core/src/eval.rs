//! Bench scoring: F1_all over grounded spans, exact match for short answers,
//! BLEU-4 for long answers, grouped by task and document type.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Sample;
use crate::geometry::BBox;
use crate::markup::{extract_spans, parse, strip_grounding};
use crate::taxonomy::{AnswerClass, AnswerMetric, DocType, TaskKind};
use crate::text::{normalize, NORMALIZER_VERSION};

pub const ANSWER_MARKER: &str = "Answer:";

/// Matched span count and the two side totals; sums across samples give the
/// micro average.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchCounts {
    pub tp: usize,
    pub pred: usize,
    pub gt: usize,
}

impl MatchCounts {
    pub fn add(&mut self, other: MatchCounts) {
        self.tp += other.tp;
        self.pred += other.pred;
        self.gt += other.gt;
    }

    /// Precision, recall, F1. An empty side scores 1 on its own ratio.
    pub fn prf(&self) -> (f64, f64, f64) {
        let p = if self.pred == 0 { 1.0 } else { self.tp as f64 / self.pred as f64 };
        let r = if self.gt == 0 { 1.0 } else { self.tp as f64 / self.gt as f64 };
        let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        (p, r, f)
    }
}

fn try_augment(u: usize, adj: &[Vec<usize>], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
    for &v in &adj[u] {
        if seen[v] {
            continue;
        }
        seen[v] = true;
        if owner[v].is_none_or(|w| try_augment(w, adj, seen, owner)) {
            owner[v] = Some(u);
            return true;
        }
    }
    false
}

/// Maximum one-to-one matching between predicted and reference spans, where a
/// pair is admissible when the normalized texts agree and IoU exceeds
/// `threshold`.
pub fn match_spans(pred: &[(String, BBox)], gt: &[(String, BBox)], threshold: f64) -> MatchCounts {
    let gt_norm: Vec<String> = gt.iter().map(|(t, _)| normalize(t)).collect();
    let adj: Vec<Vec<usize>> = pred
        .iter()
        .map(|(t, b)| {
            let t = normalize(t);
            (0..gt.len())
                .filter(|&j| gt_norm[j] == t && b.iou(&gt[j].1) > threshold)
                .collect()
        })
        .collect();
    let mut owner = vec![None; gt.len()];
    let mut tp = 0;
    for u in 0..pred.len() {
        let mut seen = vec![false; gt.len()];
        if try_augment(u, &adj, &mut seen, &mut owner) {
            tp += 1;
        }
    }
    MatchCounts {
        tp,
        pred: pred.len(),
        gt: gt.len(),
    }
}

pub fn f1_all(pred: &[(String, BBox)], gt: &[(String, BBox)], threshold: f64) -> (f64, f64, f64) {
    match_spans(pred, gt, threshold).prf()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extracted {
    pub answer: String,
    pub reasoning: Option<String>,
    /// Reasoning output lacked the answer marker.
    pub no_marker: bool,
}

/// Answer text of a raw output. Grounding is stripped first; reasoning
/// outputs are split at the last answer marker. Output that does not parse
/// yields an empty answer.
pub fn extract_answer(raw: &str, class: AnswerClass) -> Extracted {
    let text = parse(raw).map(|d| strip_grounding(&d)).unwrap_or_default();
    if class != AnswerClass::GR {
        return Extracted {
            answer: text.trim().to_string(),
            reasoning: None,
            no_marker: false,
        };
    }
    match text.rfind(ANSWER_MARKER) {
        Some(i) => Extracted {
            answer: text[i + ANSWER_MARKER.len()..].trim().to_string(),
            reasoning: Some(text[..i].trim().to_string()),
            no_marker: false,
        },
        None => Extracted {
            answer: text.trim().to_string(),
            reasoning: None,
            no_marker: true,
        },
    }
}

pub fn exact_match(answer: &str, reference: &str) -> bool {
    normalize(answer) == normalize(reference)
}

fn ngram_counts<'t>(tokens: &'t [&'t str], n: usize) -> HashMap<&'t [&'t str], usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

/// Sentence BLEU-4 over whitespace tokens with uniform weights. Orders with
/// no clipped match use (m + 1) / (t + 1); the brevity penalty uses the
/// reference length closest to the candidate (shorter on ties).
pub fn bleu4<S: AsRef<str>>(candidate: &str, references: &[S]) -> f64 {
    let cand: Vec<&str> = candidate.split_whitespace().collect();
    if cand.is_empty() || references.is_empty() {
        return 0.0;
    }
    let refs: Vec<Vec<&str>> = references.iter().map(|r| r.as_ref().split_whitespace().collect()).collect();
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let counts = ngram_counts(&cand, n);
        let mut max_ref: HashMap<&[&str], usize> = HashMap::new();
        for r in &refs {
            for (g, c) in ngram_counts(r, n) {
                let e = max_ref.entry(g).or_insert(0);
                *e = (*e).max(c);
            }
        }
        let matched: usize = counts
            .iter()
            .map(|(g, &c)| c.min(max_ref.get(g).copied().unwrap_or(0)))
            .sum();
        let total = cand.len().saturating_sub(n - 1);
        let p = if matched == 0 {
            1.0 / (total as f64 + 1.0)
        } else {
            matched as f64 / total as f64
        };
        log_sum += p.ln() / 4.0;
    }
    let c = cand.len();
    let r = refs
        .iter()
        .map(Vec::len)
        .min_by_key(|&len| (len.abs_diff(c), len))
        .expect("non-empty");
    let bp = if c < r { (1.0 - r as f64 / c as f64).exp() } else { 1.0 };
    bp * log_sum.exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub output: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub iou_threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { iou_threshold: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("IoU threshold {0} is outside (0, 1]")]
    BadThreshold(f64),
    #[error("sweep thresholds must be strictly increasing")]
    NotIncreasing,
    #[error("ground-truth sample {0:?} does not parse")]
    BadReference(String),
    #[error("duplicate ground-truth id {0:?}")]
    DuplicateId(String),
}

fn check_threshold(t: f64) -> Result<(), EvalError> {
    if t > 0.0 && t <= 1.0 {
        Ok(())
    } else {
        Err(EvalError::BadThreshold(t))
    }
}

/// Per-sample material for scoring; boxes kept so thresholds can be swept.
#[derive(Debug, Clone)]
struct Scored {
    task: TaskKind,
    doc_type: DocType,
    correct: Option<bool>,
    bleu: Option<f64>,
    pred_spans: Vec<(String, BBox)>,
    gt_spans: Vec<(String, BBox)>,
}

struct Prepared {
    items: Vec<Scored>,
    unknown_ids: Vec<String>,
    missing: usize,
    no_marker: usize,
}

fn prepare(preds: &[Prediction], gts: &[Sample]) -> Result<Prepared, EvalError> {
    let mut ids = HashSet::new();
    for g in gts {
        if !ids.insert(g.id.as_str()) {
            return Err(EvalError::DuplicateId(g.id.clone()));
        }
    }
    let by_id: HashMap<&str, &str> = preds.iter().map(|p| (p.id.as_str(), p.output.as_str())).collect();
    let mut unknown_ids: Vec<String> = preds
        .iter()
        .filter(|p| !ids.contains(p.id.as_str()))
        .map(|p| p.id.clone())
        .collect();
    unknown_ids.sort();
    unknown_ids.dedup();
    let mut missing = 0;
    let mut no_marker = 0;
    let mut items = Vec::with_capacity(gts.len());
    for g in gts {
        let output = by_id.get(g.id.as_str()).copied().unwrap_or_else(|| {
            missing += 1;
            ""
        });
        let gt_doc = parse(&g.answer).map_err(|_| EvalError::BadReference(g.id.clone()))?;
        let class = g.task.answer_class();
        let pred = extract_answer(output, class);
        no_marker += usize::from(pred.no_marker);
        let reference = extract_answer(&g.answer, class);
        let (correct, bleu) = match g.task.answer_metric() {
            AnswerMetric::ExactMatch => (Some(exact_match(&pred.answer, &reference.answer)), None),
            AnswerMetric::Bleu4 => (None, Some(bleu4(&pred.answer, &[&reference.answer]))),
        };
        let (pred_spans, gt_spans) = if g.task.has_grounded_output() {
            let pred_spans = parse(output).map(|d| extract_spans(&d)).unwrap_or_default();
            (pred_spans, extract_spans(&gt_doc))
        } else {
            (Vec::new(), Vec::new())
        };
        items.push(Scored {
            task: g.task,
            doc_type: g.doc_type,
            correct,
            bleu,
            pred_spans,
            gt_spans,
        });
    }
    Ok(Prepared {
        items,
        unknown_ids,
        missing,
        no_marker,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub task: TaskKind,
    /// `None` aggregates every document type.
    pub doc_type: Option<DocType>,
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acc: Option<f64>,
    /// Accuracy in percent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acc_pct: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bleu: Option<f64>,
    /// BLEU-4 times 100.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bleu_x100: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub precision: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recall: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f1_all: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counts: Option<MatchCounts>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub iou_threshold: f64,
    pub normalizer: String,
    pub f1_averaging: String,
    pub bleu: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub threshold: f64,
    pub f1_all: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: ConfigEcho,
    pub cells: Vec<CellReport>,
    /// Prediction ids with no ground-truth sample; not scored.
    pub unknown_ids: Vec<String>,
    /// Ground-truth samples scored as empty output.
    pub missing_predictions: usize,
    /// Reasoning outputs without an answer marker.
    pub no_marker: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Vec<SweepPoint>>,
}

impl EvalReport {
    pub fn cell(&self, task: TaskKind, doc_type: Option<DocType>) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.task == task && c.doc_type == doc_type)
    }
}

#[derive(Default)]
struct Acc {
    n: usize,
    correct: usize,
    bleu_sum: f64,
    counts: MatchCounts,
}

fn cell(task: TaskKind, doc_type: Option<DocType>, a: &Acc) -> CellReport {
    let acc = (task.answer_metric() == AnswerMetric::ExactMatch).then(|| a.correct as f64 / a.n as f64);
    let bleu = (task.answer_metric() == AnswerMetric::Bleu4).then(|| a.bleu_sum / a.n as f64);
    let prf = task.has_grounded_output().then(|| a.counts.prf());
    CellReport {
        task,
        doc_type,
        n: a.n,
        acc,
        acc_pct: acc.map(|v| v * 100.0),
        bleu,
        bleu_x100: bleu.map(|v| v * 100.0),
        precision: prf.map(|p| p.0),
        recall: prf.map(|p| p.1),
        f1_all: prf.map(|p| p.2),
        counts: task.has_grounded_output().then_some(a.counts),
    }
}

/// Scores predictions against ground truth. Predictions for unknown ids are
/// listed and ignored; samples without a prediction score as empty output.
pub fn evaluate(preds: &[Prediction], gts: &[Sample], cfg: &EvalConfig) -> Result<EvalReport, EvalError> {
    check_threshold(cfg.iou_threshold)?;
    let prepared = prepare(preds, gts)?;
    let mut groups: BTreeMap<(TaskKind, Option<DocType>), Acc> = BTreeMap::new();
    for s in &prepared.items {
        let counts = match_spans(&s.pred_spans, &s.gt_spans, cfg.iou_threshold);
        for key in [(s.task, None), (s.task, Some(s.doc_type))] {
            let a = groups.entry(key).or_default();
            a.n += 1;
            a.correct += usize::from(s.correct == Some(true));
            a.bleu_sum += s.bleu.unwrap_or(0.0);
            a.counts.add(counts);
        }
    }
    let cells = groups.iter().map(|(&(t, d), a)| cell(t, d, a)).collect();
    Ok(EvalReport {
        config: ConfigEcho {
            iou_threshold: cfg.iou_threshold,
            normalizer: NORMALIZER_VERSION.to_string(),
            f1_averaging: "micro".to_string(),
            bleu: "sentence-mean, add-one on zero orders".to_string(),
        },
        cells,
        unknown_ids: prepared.unknown_ids,
        missing_predictions: prepared.missing,
        no_marker: prepared.no_marker,
        sweep: None,
    })
}

/// Micro F1_all over all grounded-output samples at each threshold.
pub fn threshold_sweep(preds: &[Prediction], gts: &[Sample], thresholds: &[f64]) -> Result<Vec<SweepPoint>, EvalError> {
    for t in thresholds {
        check_threshold(*t)?;
    }
    if thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(EvalError::NotIncreasing);
    }
    let prepared = prepare(preds, gts)?;
    Ok(thresholds
        .iter()
        .map(|&t| {
            let mut total = MatchCounts::default();
            for s in prepared.items.iter().filter(|s| s.task.has_grounded_output()) {
                total.add(match_spans(&s.pred_spans, &s.gt_spans, t));
            }
            SweepPoint {
                threshold: t,
                f1_all: total.prf().2,
            }
        })
        .collect())
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.digits$}"))
}

/// Aligned plain-text table, one row per task and document type.
pub fn render_table(report: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# IoU > {}  normalizer {}  F1 {}",
        report.config.iou_threshold, report.config.normalizer, report.config.f1_averaging
    );
    let _ = writeln!(
        out,
        "{:<8} {:<7} {:>6} {:>7} {:>7} {:>6} {:>6} {:>6}",
        "task", "doc", "n", "Acc", "BLEU", "P", "R", "F1"
    );
    for c in &report.cells {
        let _ = writeln!(
            out,
            "{:<8} {:<7} {:>6} {:>7} {:>7} {:>6} {:>6} {:>6}",
            c.task.as_str(),
            c.doc_type.map_or("all", |d| d.as_str()),
            c.n,
            opt(c.acc_pct, 1),
            opt(c.bleu_x100, 1),
            opt(c.precision, 3),
            opt(c.recall, 3),
            opt(c.f1_all, 3),
        );
    }
    if let Some(sweep) = &report.sweep {
        let _ = writeln!(out, "\nthreshold  F1_all");
        for p in sweep {
            let _ = writeln!(out, "{:<10} {:.3}", p.threshold, p.f1_all);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bb(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    fn s(t: &str, b: BBox) -> (String, BBox) {
        (t.to_string(), b)
    }

    #[test]
    fn f1_examples() {
        let a = bb(0.1, 0.1, 0.2, 0.2);
        let b = bb(0.5, 0.5, 0.6, 0.6);
        let gt = vec![s("x", a), s("y", b)];
        assert_eq!(f1_all(&gt, &gt, 0.5), (1.0, 1.0, 1.0));
        let pred = vec![s("x", a), s("z", b)];
        assert_eq!(f1_all(&pred, &gt, 0.5), (0.5, 0.5, 0.5));
        let gt5 = vec![s("5", a), s("5", a)];
        assert_eq!(match_spans(&[s("5", a)], &gt5, 0.5).tp, 1);
        assert_eq!(f1_all(&[], &[], 0.5), (1.0, 1.0, 1.0));
        assert_eq!(f1_all(&[], &gt, 0.5), (1.0, 0.0, 0.0));
    }

    #[test]
    fn iou_must_exceed_threshold() {
        // IoU exactly 1/3.
        let a = bb(0.0, 0.0, 0.2, 0.1);
        let b = bb(0.1, 0.0, 0.3, 0.1);
        assert_eq!(match_spans(&[s("t", a)], &[s("t", b)], 1.0 / 3.0).tp, 0);
        assert_eq!(match_spans(&[s("t", a)], &[s("t", b)], 0.3).tp, 1);
    }

    #[test]
    fn answer_extraction() {
        assert_eq!(extract_answer("so it adds up. Answer: 42", AnswerClass::GR).answer, "42");
        assert_eq!(extract_answer("Answer: A. Answer: B", AnswerClass::GR).answer, "B");
        assert_eq!(extract_answer("<ocr>Paris</ocr><bbox>1,2,3,4</bbox>", AnswerClass::GA).answer, "Paris");
        let e = extract_answer("no marker here", AnswerClass::GR);
        assert!(e.no_marker);
        assert_eq!(e.answer, "no marker here");
        assert_eq!(extract_answer("<ocr>broken", AnswerClass::GA).answer, "");
    }

    #[test]
    fn exact_match_cases() {
        assert!(exact_match("Paris", "paris"));
        assert!(exact_match("Paris.", "Paris"));
        assert!(!exact_match("Paris, France", "Paris"));
    }

    #[test]
    fn bleu_cases() {
        assert_eq!(bleu4("a b c d e", &["a b c d e"]), 1.0);
        assert_eq!(bleu4("short", &["short"]), 1.0);
        assert_eq!(bleu4("", &["x"]), 0.0);
        let v = bleu4("the the the the", &["the cat sat down"]);
        assert!((v - (1.0f64 / 96.0).powf(0.25)).abs() < 1e-12);
        // Brevity penalty: c = 2, r = 4.
        let v = bleu4("a b", &["a b c d"]);
        let expect = (1.0f64 - 2.0).exp() * (1.0f64 * 1.0 * 1.0 * 1.0).powf(0.25);
        assert!((v - expect).abs() < 1e-12);
    }

    #[test]
    fn sweep_rejects_unsorted() {
        assert_eq!(threshold_sweep(&[], &[], &[0.5, 0.3]).unwrap_err(), EvalError::NotIncreasing);
        assert!(threshold_sweep(&[], &[], &[0.0]).is_err());
    }
}
