//! Multi-task objective and the deterministic training loop.

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{build_atomic_target, AtomicTarget, Segment, TargetMode};
use crate::diffcore::{loss, AdamWConfig, AdamWState, DenseArray, ParamStore, Tape, Var};
use crate::encoder::{build_encoder, encoder_forward, forward_on_tape, EncoderConfig, ForwardNodes, PredictionRecord};
use crate::error::{Error, Result};
use crate::metrics::{AtomicAccuracyMode, MetricsReport, RawPrediction, DEFAULT_THRESHOLD};

/// Which loss drives the atomic head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossMode {
    /// Mean KL divergence against the target distribution.
    #[default]
    Kl,
    /// Mean squared error against the target distribution.
    Mse,
    /// Atomic head untrained; complex cross-entropy only.
    ComplexOnly,
}

impl LossMode {
    pub fn as_str(self) -> &'static str {
        match self {
            LossMode::Kl => "kl",
            LossMode::Mse => "mse",
            LossMode::ComplexOnly => "complex-only",
        }
    }
}

impl FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kl" => Ok(LossMode::Kl),
            "mse" => Ok(LossMode::Mse),
            "complex-only" => Ok(LossMode::ComplexOnly),
            other => Err(Error::Config(format!("unknown loss mode `{other}` (expected kl, mse or complex-only)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub alpha: f64,
    pub beta: f64,
    pub loss_mode: LossMode,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Stop after this many epochs without a better validation score.
    pub patience: Option<usize>,
    pub threshold: f64,
    pub target_mode: TargetMode,
    pub accuracy_mode: AtomicAccuracyMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            loss_mode: LossMode::Kl,
            learning_rate: 1e-3,
            weight_decay: 0.01,
            epochs: 300,
            batch_size: 16,
            seed: 0,
            patience: None,
            threshold: DEFAULT_THRESHOLD,
            target_mode: TargetMode::Auto,
            accuracy_mode: AtomicAccuracyMode::TruthRecall,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.alpha >= 0.0 && self.beta >= 0.0 && self.alpha.is_finite() && self.beta.is_finite()) {
            return bad(format!("alpha ({}) and beta ({}) must be finite and non-negative", self.alpha, self.beta));
        }
        if self.alpha == 0.0 && self.beta == 0.0 {
            return bad("alpha and beta cannot both be zero".into());
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if !(self.weight_decay >= 0.0) {
            return bad(format!("weight_decay {} must be non-negative", self.weight_decay));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad(format!("threshold {} must lie in (0, 1)", self.threshold));
        }
        if self.patience == Some(0) {
            return bad("patience must be at least 1 when set".into());
        }
        Ok(())
    }

    pub fn optimizer(&self) -> AdamWConfig {
        AdamWConfig { learning_rate: self.learning_rate, weight_decay: self.weight_decay, ..AdamWConfig::default() }
    }

    fn atomic_active(&self) -> bool {
        self.loss_mode != LossMode::ComplexOnly && self.alpha != 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub total: f64,
    pub atomic: f64,
    pub complex: f64,
}

fn atomic_term(mode: LossMode, predicted: &[f64], target: &[f64]) -> Result<f64> {
    match mode {
        LossMode::Kl => loss::mean_kl(target, predicted),
        LossMode::Mse => loss::mse(predicted, target),
        LossMode::ComplexOnly => Ok(0.0),
    }
}

/// `alpha · atomic + beta · complex` for an already computed prediction.
pub fn combined_loss(pred: &PredictionRecord, target: &AtomicTarget, c_true: &[f64], cfg: &TrainConfig) -> Result<LossTerms> {
    if target.probs.len() != pred.atomic_probs.len() {
        return Err(Error::Dimension(format!(
            "atomic target has {} classes, prediction {}",
            target.probs.len(),
            pred.atomic_probs.len()
        )));
    }
    let atomic = atomic_term(cfg.loss_mode, &pred.atomic_probs, &target.probs)?;
    let complex = loss::cross_entropy(&pred.complex_probs, c_true)?;
    Ok(LossTerms { total: cfg.alpha * atomic + cfg.beta * complex, atomic, complex })
}

/// Records the combined loss on `tape` and returns its root. The atomic term is
/// left off the tape when it carries no weight, so the atomic head gets no gradient.
pub fn loss_on_tape(
    tape: &mut Tape,
    nodes: &ForwardNodes,
    target: &[f64],
    class: usize,
    cfg: &TrainConfig,
) -> Result<(Var, LossTerms)> {
    let ce = tape.cross_entropy(nodes.complex_probs, class)?;
    let complex = tape.value(ce).data()[0];
    let weighted_ce = tape.scale(ce, cfg.beta);
    if !cfg.atomic_active() {
        return Ok((weighted_ce, LossTerms { total: cfg.beta * complex, atomic: 0.0, complex }));
    }
    let at = match cfg.loss_mode {
        LossMode::Kl => tape.mean_kl(nodes.atomic_probs, target)?,
        _ => tape.mse(nodes.atomic_probs, target)?,
    };
    let atomic = tape.value(at).data()[0];
    let weighted_at = tape.scale(at, cfg.alpha);
    let root = tape.add(weighted_at, weighted_ce)?;
    Ok((root, LossTerms { total: tape.value(root).data()[0], atomic, complex }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss_total: f64,
    pub loss_atomic: f64,
    pub loss_complex: f64,
    pub val_char_f1: f64,
    pub val_atomic_accuracy: f64,
    pub wall_clock_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were returned.
    pub best_epoch: usize,
}

impl TrainHistory {
    /// One JSON object per line, one line per epoch.
    pub fn to_jsonl(&self) -> String {
        self.records.iter().map(|r| serde_json::to_string(r).expect("record serializes") + "\n").collect()
    }

    pub fn from_jsonl(text: &str) -> Result<Vec<EpochRecord>> {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::Parse { row: i + 1, message: e.to_string() }))
            .collect()
    }

    /// The history with wall-clock readings zeroed, for determinism checks.
    pub fn without_timing(&self) -> Self {
        let mut h = self.clone();
        for r in &mut h.records {
            r.wall_clock_s = 0.0;
        }
        h
    }

    pub fn best(&self) -> Option<&EpochRecord> {
        self.records.get(self.best_epoch.checked_sub(1)?)
    }
}

struct Sample<'a> {
    window: &'a DenseArray,
    target: Vec<f64>,
    class: usize,
}

fn check_segment(cfg: &EncoderConfig, seg: &Segment) -> Result<()> {
    if seg.window.shape() != (cfg.channels, cfg.steps) {
        return Err(Error::Dimension(format!(
            "segment `{}` has shape {:?}, encoder expects ({}, {})",
            seg.source_id,
            seg.window.shape(),
            cfg.channels,
            cfg.steps
        )));
    }
    if seg.complex_label >= cfg.n_complex {
        return Err(Error::Label(format!(
            "segment `{}` complex label {} outside {} classes",
            seg.source_id, seg.complex_label, cfg.n_complex
        )));
    }
    Ok(())
}

fn prepare<'a>(segs: &'a [Segment], ecfg: &EncoderConfig, tcfg: &TrainConfig) -> Result<Vec<Sample<'a>>> {
    segs.iter()
        .map(|seg| {
            check_segment(ecfg, seg)?;
            let target = if tcfg.atomic_active() {
                build_atomic_target(seg, tcfg.target_mode, ecfg.n_atomic)?.probs
            } else {
                vec![0.0; ecfg.n_atomic]
            };
            Ok(Sample { window: &seg.window.values, target, class: seg.complex_label })
        })
        .collect()
}

fn add_into(acc: &mut BTreeMap<String, DenseArray>, grads: BTreeMap<String, DenseArray>) {
    for (name, g) in grads {
        match acc.get_mut(&name) {
            Some(a) => a.data_mut().iter_mut().zip(g.data()).for_each(|(x, y)| *x += y),
            None => {
                acc.insert(name, g);
            }
        }
    }
}

fn better(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 > b.0 || (a.0 == b.0 && a.1 > b.1)
}

/// Mini-batch AdamW on the combined loss. Returns the parameters from the epoch
/// with the best validation CHAR F1 (atomic accuracy breaks ties; earlier wins).
pub fn train(
    train_set: &[Segment],
    val: &[Segment],
    ecfg: &EncoderConfig,
    tcfg: &TrainConfig,
) -> Result<(ParamStore, TrainHistory)> {
    train_from(build_encoder(ecfg)?, train_set, val, ecfg, tcfg)
}

/// Like [`train`] but starting from the given parameters.
pub fn train_from(
    mut params: ParamStore,
    train_set: &[Segment],
    val: &[Segment],
    ecfg: &EncoderConfig,
    tcfg: &TrainConfig,
) -> Result<(ParamStore, TrainHistory)> {
    ecfg.validate()?;
    tcfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Input("training set is empty".into()));
    }
    if val.is_empty() {
        return Err(Error::Input("validation set is empty".into()));
    }
    let samples = prepare(train_set, ecfg, tcfg)?;
    for seg in val {
        check_segment(ecfg, seg)?;
    }
    let class_names: Vec<String> = (0..ecfg.n_complex).map(|c| c.to_string()).collect();
    let mut optimizer = AdamWState::new(tcfg.optimizer());
    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut history = TrainHistory::default();
    let mut best: Option<((f64, f64), ParamStore)> = None;
    let mut stale = 0;
    let started = Instant::now();

    for epoch in 1..=tcfg.epochs {
        order.shuffle(&mut rng);
        let mut sums = LossTerms { total: 0.0, atomic: 0.0, complex: 0.0 };
        for (b, batch) in order.chunks(tcfg.batch_size).enumerate() {
            let mut acc = BTreeMap::new();
            for &i in batch {
                let s = &samples[i];
                let mut tape = Tape::new();
                let nodes = forward_on_tape(ecfg, &params, &mut tape, s.window)?;
                let (root, terms) = loss_on_tape(&mut tape, &nodes, &s.target, s.class, tcfg)?;
                if !terms.total.is_finite() {
                    return Err(Error::Numeric(format!("non-finite loss at epoch {epoch}, batch {}", b + 1)));
                }
                let grads = tape.backward(root).map_err(|e| match e {
                    Error::Numeric(m) => Error::Numeric(format!("epoch {epoch}, batch {}: {m}", b + 1)),
                    other => other,
                })?;
                add_into(&mut acc, grads.into_params());
                sums.total += terms.total;
                sums.atomic += terms.atomic;
                sums.complex += terms.complex;
            }
            let scale = 1.0 / batch.len() as f64;
            for g in acc.values_mut() {
                g.data_mut().iter_mut().for_each(|v| *v *= scale);
            }
            optimizer.step(&mut params, &acc).map_err(|e| match e {
                Error::Numeric(m) => Error::Numeric(format!("epoch {epoch}, batch {}: {m}", b + 1)),
                other => other,
            })?;
        }
        let n = samples.len() as f64;
        let report = evaluate_with(ecfg, &params, val, &class_names, tcfg.threshold, tcfg.accuracy_mode)?;
        history.records.push(EpochRecord {
            epoch,
            loss_total: sums.total / n,
            loss_atomic: sums.atomic / n,
            loss_complex: sums.complex / n,
            val_char_f1: report.char_f1,
            val_atomic_accuracy: report.atomic_accuracy,
            wall_clock_s: started.elapsed().as_secs_f64(),
        });
        let score = (report.char_f1, report.atomic_accuracy);
        if best.as_ref().map_or(true, |(s, _)| better(score, *s)) {
            best = Some((score, params.clone()));
            history.best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if tcfg.patience.is_some_and(|p| stale >= p) {
                break;
            }
        }
    }
    let (_, best_params) = best.expect("at least one epoch ran");
    Ok((best_params, history))
}

/// Ground-truth atomic types of a segment: the weak set, or the distinct
/// dense labels when no set is given.
pub fn atomic_truth(seg: &Segment) -> BTreeSet<usize> {
    if !seg.weak_atomic.is_empty() {
        return seg.weak_atomic.clone();
    }
    seg.dense_atomic.iter().flatten().flatten().copied().collect()
}

/// Runs the encoder on every segment.
pub fn predict(cfg: &EncoderConfig, params: &ParamStore, segs: &[Segment]) -> Result<Vec<RawPrediction>> {
    segs.iter()
        .map(|seg| {
            check_segment(cfg, seg)?;
            let rec = encoder_forward(cfg, params, &seg.window)?;
            Ok(RawPrediction {
                id: seg.source_id.clone(),
                complex_pred: rec.complex_argmax,
                atomic_probs: rec.atomic_probs,
                complex_probs: rec.complex_probs,
                complex_true: seg.complex_label,
                atomic_truth: atomic_truth(seg),
            })
        })
        .collect()
}

pub fn evaluate(
    cfg: &EncoderConfig,
    params: &ParamStore,
    segs: &[Segment],
    class_names: &[String],
    threshold: f64,
) -> Result<MetricsReport> {
    evaluate_with(cfg, params, segs, class_names, threshold, AtomicAccuracyMode::TruthRecall)
}

pub fn evaluate_with(
    cfg: &EncoderConfig,
    params: &ParamStore,
    segs: &[Segment],
    class_names: &[String],
    threshold: f64,
    mode: AtomicAccuracyMode,
) -> Result<MetricsReport> {
    if segs.is_empty() {
        return Err(Error::Input("cannot evaluate an empty set".into()));
    }
    if class_names.len() != cfg.n_complex {
        return Err(Error::Schema(format!("{} class names for {} complex classes", class_names.len(), cfg.n_complex)));
    }
    MetricsReport::from_predictions(&predict(cfg, params, segs)?, class_names, threshold, mode)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(atomic: Vec<f64>, complex: Vec<f64>) -> PredictionRecord {
        PredictionRecord {
            complex_argmax: crate::encoder::argmax(&complex),
            atomic_probs: atomic,
            complex_probs: complex,
            activation_cache: DenseArray::scalar(0.0),
        }
    }

    #[test]
    fn combined_loss_closed_form() {
        let pred = record(vec![0.25; 4], vec![0.8, 0.1, 0.1]);
        let target = AtomicTarget { probs: vec![0.5, 0.5, 0.0, 0.0] };
        let terms = combined_loss(&pred, &target, &[1.0, 0.0, 0.0], &TrainConfig::default()).unwrap();
        assert!((terms.total - 0.3964304).abs() < 1e-6);
    }

    #[test]
    fn alpha_zero_and_complex_only_reduce_to_cross_entropy() {
        let pred = record(vec![0.1, 0.9], vec![0.3, 0.7]);
        let target = AtomicTarget { probs: vec![0.5, 0.5] };
        let ce = -(0.7f64).ln();
        let cfg = TrainConfig { alpha: 0.0, beta: 2.0, ..TrainConfig::default() };
        assert_eq!(combined_loss(&pred, &target, &[0.0, 1.0], &cfg).unwrap().total, 2.0 * ce);
        let cfg = TrainConfig { loss_mode: LossMode::ComplexOnly, ..TrainConfig::default() };
        let terms = combined_loss(&pred, &target, &[0.0, 1.0], &cfg).unwrap();
        assert_eq!((terms.atomic, terms.total), (0.0, ce));
    }

    #[test]
    fn perfect_prediction_has_zero_loss() {
        let pred = record(vec![0.5, 0.5], vec![1.0, 0.0]);
        let target = AtomicTarget { probs: vec![0.5, 0.5] };
        for mode in [LossMode::Kl, LossMode::Mse] {
            let cfg = TrainConfig { loss_mode: mode, ..TrainConfig::default() };
            assert_eq!(combined_loss(&pred, &target, &[1.0, 0.0], &cfg).unwrap().total, 0.0);
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { alpha: 0.0, beta: 0.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { epochs: 0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { alpha: -1.0, ..TrainConfig::default() }.validate().is_err());
        assert!(matches!("softmax".parse::<LossMode>(), Err(Error::Config(_))));
        assert_eq!("complex-only".parse::<LossMode>().unwrap(), LossMode::ComplexOnly);
    }
}
