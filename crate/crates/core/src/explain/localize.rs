use serde::{Deserialize, Serialize};

use crate::dataset::SensorWindow;
use crate::diffcore::{ParamStore, Tape};
use crate::encoder::{forward_on_tape, names, EncoderConfig};
use crate::error::{Error, Result};

/// How the atomic head's weights are combined with the sequence activations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RelevanceMode {
    /// `max(0, Σ_j w[j]·h[t, j])`: the step's rectified contribution to the logit.
    #[default]
    Contribution,
    /// `Σ_j |w[j]|·h[t, j]`.
    Magnitude,
    /// `Σ_j |w[j]|`, identical at every step.
    WeightsOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizationOptions {
    pub mode: RelevanceMode,
    /// Steps with relevance at or above this fraction of the peak are kept.
    pub peak_fraction: f64,
    /// Apply a 3-tap moving average before thresholding.
    pub smooth: bool,
}

impl Default for LocalizationOptions {
    fn default() -> Self {
        Self { mode: RelevanceMode::Contribution, peak_fraction: 0.5, smooth: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemporalInterval {
    pub atomic: usize,
    pub start_s: f64,
    pub end_s: f64,
    /// Share of the total relevance inside the interval.
    pub confidence: f64,
}

impl TemporalInterval {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.start_s + self.end_s)
    }
}

/// Per-step relevance of `atomic` over the recurrent sequence (one value per
/// convolution step).
pub fn atomic_relevance(
    cfg: &EncoderConfig,
    params: &ParamStore,
    window: &SensorWindow,
    atomic: usize,
    mode: RelevanceMode,
) -> Result<Vec<f64>> {
    if atomic >= cfg.n_atomic {
        return Err(Error::Label(format!("atomic id {atomic} outside {} classes", cfg.n_atomic)));
    }
    let mut tape = Tape::new();
    let nodes = forward_on_tape(cfg, params, &mut tape, &window.values)?;
    let hidden = tape.value(nodes.atomic_hidden);
    let w2 = params.get(names::ATOMIC_W2)?;
    let (steps, width) = hidden.matrix_dims();
    let column: Vec<f64> = (0..width).map(|j| w2.at2(j, atomic)).collect();
    Ok((0..steps)
        .map(|t| {
            let h = hidden.row(t);
            match mode {
                RelevanceMode::Contribution => column.iter().zip(h).map(|(w, x)| w * x).sum::<f64>().max(0.0),
                RelevanceMode::Magnitude => column.iter().zip(h).map(|(w, x)| w.abs() * x).sum(),
                RelevanceMode::WeightsOnly => column.iter().map(|w| w.abs()).sum(),
            }
        })
        .collect())
}

fn smooth3(r: &[f64]) -> Vec<f64> {
    (0..r.len())
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 2).min(r.len());
            r[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Maximal runs of `relevance` at or above `peak_fraction` of its peak.
///
/// Step `k` starts at `k · step_s`; a run ending at step `b` ends at
/// `(b + 1) · step_s`, except that a run reaching the last step ends at
/// `total_s`. All-zero relevance yields no intervals.
pub fn intervals_from_relevance(
    relevance: &[f64],
    step_s: f64,
    total_s: f64,
    atomic: usize,
    peak_fraction: f64,
) -> Vec<TemporalInterval> {
    let peak = relevance.iter().cloned().fold(0.0, f64::max);
    if !(peak > 0.0) {
        return Vec::new();
    }
    let mass: f64 = relevance.iter().map(|r| r.max(0.0)).sum();
    let cut = peak_fraction * peak;
    let mut out = Vec::new();
    let mut k = 0;
    while k < relevance.len() {
        if relevance[k] < cut {
            k += 1;
            continue;
        }
        let a = k;
        while k < relevance.len() && relevance[k] >= cut {
            k += 1;
        }
        let b = k - 1;
        let end = if b + 1 == relevance.len() { total_s } else { ((b + 1) as f64 * step_s).min(total_s) };
        out.push(TemporalInterval {
            atomic,
            start_s: a as f64 * step_s,
            end_s: end,
            confidence: relevance[a..=b].iter().sum::<f64>() / mass,
        });
    }
    out
}

/// The interval carrying the most relevance; ties go to the earliest.
pub fn primary_interval(intervals: &[TemporalInterval]) -> Option<&TemporalInterval> {
    intervals.iter().fold(None, |best: Option<&TemporalInterval>, iv| match best {
        Some(b) if b.confidence >= iv.confidence => Some(b),
        _ => Some(iv),
    })
}

pub fn temporal_localization(
    cfg: &EncoderConfig,
    params: &ParamStore,
    window: &SensorWindow,
    atomic: usize,
) -> Result<Vec<TemporalInterval>> {
    temporal_localization_with(cfg, params, window, atomic, &LocalizationOptions::default())
}

pub fn temporal_localization_with(
    cfg: &EncoderConfig,
    params: &ParamStore,
    window: &SensorWindow,
    atomic: usize,
    opts: &LocalizationOptions,
) -> Result<Vec<TemporalInterval>> {
    if !(opts.peak_fraction > 0.0 && opts.peak_fraction <= 1.0) {
        return Err(Error::Config(format!("peak fraction {} must lie in (0, 1]", opts.peak_fraction)));
    }
    let mut relevance = atomic_relevance(cfg, params, window, atomic, opts.mode)?;
    if opts.smooth {
        relevance = smooth3(&relevance);
    }
    let step_s = cfg.conv_stride as f64 / window.sample_rate;
    Ok(intervals_from_relevance(&relevance, step_s, window.seconds(), atomic, opts.peak_fraction))
}
