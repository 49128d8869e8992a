//! Atomic Accuracy Score, complex-activity F1 and confusion matrices.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default confidence threshold for counting an atomic activity as detected.
pub const DEFAULT_THRESHOLD: f64 = 0.4;

/// How per-window atomic accuracy is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AtomicAccuracyMode {
    /// Fraction of ground-truth activities whose probability exceeds the threshold.
    #[default]
    TruthRecall,
    /// Fraction of above-threshold activities that are in the ground truth (0 if none).
    DetectedPrecision,
    /// Fraction of all classes whose above/below-threshold decision matches the truth.
    AllClasses,
}

fn window_score(p: &[f64], truth: &BTreeSet<usize>, threshold: f64, mode: AtomicAccuracyMode) -> f64 {
    match mode {
        AtomicAccuracyMode::TruthRecall => {
            truth.iter().filter(|&&i| p[i] > threshold).count() as f64 / truth.len() as f64
        }
        AtomicAccuracyMode::DetectedPrecision => {
            let detected: Vec<usize> = (0..p.len()).filter(|&i| p[i] > threshold).collect();
            if detected.is_empty() {
                0.0
            } else {
                detected.iter().filter(|i| truth.contains(i)).count() as f64 / detected.len() as f64
            }
        }
        AtomicAccuracyMode::AllClasses => {
            (0..p.len()).filter(|&i| (p[i] > threshold) == truth.contains(&i)).count() as f64 / p.len() as f64
        }
    }
}

/// Mean over windows of the fraction of ground-truth atomic activities whose
/// predicted probability exceeds `threshold`.
pub fn atomic_accuracy(preds: &[Vec<f64>], truths: &[BTreeSet<usize>], threshold: f64) -> Result<f64> {
    atomic_accuracy_with(preds, truths, threshold, AtomicAccuracyMode::TruthRecall)
}

pub fn atomic_accuracy_with(
    preds: &[Vec<f64>],
    truths: &[BTreeSet<usize>],
    threshold: f64,
    mode: AtomicAccuracyMode,
) -> Result<f64> {
    if preds.len() != truths.len() {
        return Err(Error::Input(format!("{} predictions for {} truth sets", preds.len(), truths.len())));
    }
    if preds.is_empty() {
        return Err(Error::Input("no windows to score".into()));
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Input(format!("threshold {threshold} must lie in (0, 1)")));
    }
    let mut total = 0.0;
    for (k, (p, truth)) in preds.iter().zip(truths).enumerate() {
        if truth.is_empty() {
            return Err(Error::Input(format!("window {k} has an empty truth set")));
        }
        if let Some(&bad) = truth.iter().find(|&&i| i >= p.len()) {
            return Err(Error::Label(format!("window {k}: atomic id {bad} outside {} classes", p.len())));
        }
        total += window_score(p, truth, threshold, mode);
    }
    Ok(total / preds.len() as f64)
}

fn check_labels(pred: &[usize], truth: &[usize], classes: usize) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::Input(format!("{} predictions for {} labels", pred.len(), truth.len())));
    }
    if let Some(&bad) = pred.iter().chain(truth).find(|&&l| l >= classes) {
        return Err(Error::Label(format!("label {bad} outside {classes} classes")));
    }
    Ok(())
}

/// Raw confusion counts, `counts[true][pred]`.
pub fn confusion_counts(pred: &[usize], truth: &[usize], classes: usize) -> Result<Vec<Vec<u64>>> {
    check_labels(pred, truth, classes)?;
    let mut counts = vec![vec![0u64; classes]; classes];
    for (&p, &t) in pred.iter().zip(truth) {
        counts[t][p] += 1;
    }
    Ok(counts)
}

/// Row-normalizes counts; rows without support stay zero.
pub fn normalize_rows(counts: &[Vec<u64>]) -> Vec<Vec<f64>> {
    counts
        .iter()
        .map(|row| {
            let s: u64 = row.iter().sum();
            row.iter().map(|&c| if s == 0 { 0.0 } else { c as f64 / s as f64 }).collect()
        })
        .collect()
}

pub fn confusion(pred: &[usize], truth: &[usize], classes: usize, normalize: bool) -> Result<Vec<Vec<f64>>> {
    let counts = confusion_counts(pred, truth, classes)?;
    Ok(if normalize { normalize_rows(&counts) } else { counts.iter().map(|r| r.iter().map(|&c| c as f64).collect()).collect() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Per-class scores from a counts matrix.
pub fn class_scores(counts: &[Vec<u64>], names: &[String]) -> Vec<ClassScores> {
    let m = counts.len();
    (0..m)
        .map(|c| {
            let tp = counts[c][c];
            let support: u64 = counts[c].iter().sum();
            let predicted: u64 = (0..m).map(|t| counts[t][c]).sum();
            let (precision, recall) = (ratio(tp, predicted), ratio(tp, support));
            ClassScores {
                name: names.get(c).cloned().unwrap_or_else(|| c.to_string()),
                precision,
                recall,
                f1: harmonic(precision, recall),
                support,
            }
        })
        .collect()
}

/// Macro F1 over classes with support, from a counts matrix.
pub fn macro_f1_from_counts(counts: &[Vec<u64>]) -> f64 {
    let scores = class_scores(counts, &[]);
    let supported: Vec<f64> = scores.iter().filter(|s| s.support > 0).map(|s| s.f1).collect();
    if supported.is_empty() {
        0.0
    } else {
        supported.iter().sum::<f64>() / supported.len() as f64
    }
}

/// Macro-averaged F1 over classes that appear in `truth`.
pub fn macro_f1(pred: &[usize], truth: &[usize], classes: usize) -> Result<f64> {
    Ok(macro_f1_from_counts(&confusion_counts(pred, truth, classes)?))
}

/// One evaluated window, as dumped for later recomputation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawPrediction {
    pub id: String,
    pub atomic_probs: Vec<f64>,
    pub complex_probs: Vec<f64>,
    pub complex_pred: usize,
    pub complex_true: usize,
    pub atomic_truth: BTreeSet<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub char_f1: f64,
    pub atomic_accuracy: f64,
    pub threshold: f64,
    pub atomic_accuracy_mode: AtomicAccuracyMode,
    pub samples: usize,
    pub per_class: Vec<ClassScores>,
    /// Row-normalized, `[true][pred]`.
    pub confusion: Vec<Vec<f64>>,
    pub counts: Vec<Vec<u64>>,
}

impl MetricsReport {
    /// Aggregates raw predictions. Order of `preds` does not matter.
    pub fn from_predictions(
        preds: &[RawPrediction],
        class_names: &[String],
        threshold: f64,
        mode: AtomicAccuracyMode,
    ) -> Result<Self> {
        if preds.is_empty() {
            return Err(Error::Input("cannot evaluate an empty set".into()));
        }
        let m = class_names.len();
        let pred: Vec<usize> = preds.iter().map(|p| p.complex_pred).collect();
        let truth: Vec<usize> = preds.iter().map(|p| p.complex_true).collect();
        let counts = confusion_counts(&pred, &truth, m)?;
        let atomic: Vec<Vec<f64>> = preds.iter().map(|p| p.atomic_probs.clone()).collect();
        let sets: Vec<BTreeSet<usize>> = preds.iter().map(|p| p.atomic_truth.clone()).collect();
        Ok(Self {
            char_f1: macro_f1_from_counts(&counts),
            atomic_accuracy: atomic_accuracy_with(&atomic, &sets, threshold, mode)?,
            threshold,
            atomic_accuracy_mode: mode,
            samples: preds.len(),
            per_class: class_scores(&counts, class_names),
            confusion: normalize_rows(&counts),
            counts,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("metrics serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("metrics.json: {e}")))
    }

    /// Tab-separated normalized confusion matrix with a header row of class names.
    pub fn confusion_tsv(&self) -> String {
        let names: Vec<&str> = self.per_class.iter().map(|c| c.name.as_str()).collect();
        let mut out = format!("true\\pred\t{}\n", names.join("\t"));
        for (name, row) in names.iter().zip(&self.confusion) {
            let cells: Vec<String> = row.iter().map(f64::to_string).collect();
            out.push_str(&format!("{name}\t{}\n", cells.join("\t")));
        }
        out
    }
}
