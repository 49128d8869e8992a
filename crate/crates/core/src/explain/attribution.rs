use serde::{Deserialize, Serialize};

use crate::dataset::{sensor_groups, SensorWindow};
use crate::diffcore::{DenseArray, ParamStore, Tape};
use crate::encoder::{forward_on_tape, EncoderConfig};
use crate::error::{Error, Result};

/// The output whose evidence is attributed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "kebab-case")]
pub enum AttributionTarget {
    Complex(usize),
    Atomic(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttributionMethod {
    /// Feature maps weighted by the time-averaged gradient of the target logit.
    GradCam,
    /// Grad-CAM on activations measured against the response to an all-zero
    /// window, so input-independent (bias-driven) activity carries no credit.
    #[default]
    GradCamBaseline,
    /// Mean feature-map activation, ignoring the target.
    Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorScore {
    pub id: String,
    pub location: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionReport {
    pub target: AttributionTarget,
    pub method: AttributionMethod,
    /// Max-normalized, in first-appearance order of the window's sensors.
    pub sensors: Vec<SensorScore>,
    /// Every raw score was zero.
    pub degenerate: bool,
}

impl AttributionReport {
    /// Index of the highest-scoring sensor; ties go to the first.
    pub fn top(&self) -> Option<usize> {
        if self.degenerate {
            return None;
        }
        let scores: Vec<f64> = self.sensors.iter().map(|s| s.score).collect();
        Some(crate::encoder::argmax(&scores))
    }
}

pub fn sensor_attribution(
    cfg: &EncoderConfig,
    params: &ParamStore,
    window: &SensorWindow,
    target: AttributionTarget,
) -> Result<AttributionReport> {
    sensor_attribution_with(cfg, params, window, target, AttributionMethod::default())
}

/// Scores each physical sensor by its channels' per-channel convolution
/// feature maps, the last layer that still separates channels.
pub fn sensor_attribution_with(
    cfg: &EncoderConfig,
    params: &ParamStore,
    window: &SensorWindow,
    target: AttributionTarget,
    method: AttributionMethod,
) -> Result<AttributionReport> {
    match target {
        AttributionTarget::Complex(c) if c >= cfg.n_complex => {
            return Err(Error::Label(format!("complex class {c} outside {} classes", cfg.n_complex)))
        }
        AttributionTarget::Atomic(a) if a >= cfg.n_atomic => {
            return Err(Error::Label(format!("atomic id {a} outside {} classes", cfg.n_atomic)))
        }
        _ => {}
    }
    let mut tape = Tape::new();
    let nodes = forward_on_tape(cfg, params, &mut tape, &window.values)?;
    let maps = tape.value(nodes.channel_features).clone();
    let (rows, steps) = maps.matrix_dims();
    let f = cfg.features_per_channel;

    let channel_scores: Vec<f64> = match method {
        AttributionMethod::Activation => {
            (0..cfg.channels).map(|c| (c * f..(c + 1) * f).map(|k| maps.row(k).iter().sum::<f64>()).sum::<f64>() / (f * steps) as f64).collect()
        }
        AttributionMethod::GradCam | AttributionMethod::GradCamBaseline => {
            let reference = if method == AttributionMethod::GradCamBaseline {
                let mut silent = Tape::new();
                let zero = DenseArray::zeros(window.values.shape());
                let n = forward_on_tape(cfg, params, &mut silent, &zero)?;
                Some(silent.value(n.channel_features).clone())
            } else {
                None
            };
            let activation = |k: usize, t: usize| maps.at2(k, t) - reference.as_ref().map_or(0.0, |r| r.at2(k, t));
            let logit = match target {
                AttributionTarget::Complex(c) => tape.index(nodes.complex_logits, c)?,
                AttributionTarget::Atomic(a) => tape.index(nodes.atomic_logits, a)?,
            };
            let grads = tape.backward(logit)?;
            let weights: Vec<f64> = match grads.wrt(nodes.channel_features) {
                Some(g) => (0..rows).map(|k| g.row(k).iter().sum::<f64>() / steps as f64).collect(),
                None => vec![0.0; rows],
            };
            (0..cfg.channels)
                .map(|c| {
                    let cam: f64 = (0..steps)
                        .map(|t| (c * f..(c + 1) * f).map(|k| weights[k] * activation(k, t)).sum::<f64>().max(0.0))
                        .sum();
                    cam / steps as f64
                })
                .collect()
        }
    };

    let groups = sensor_groups(&window.channels);
    let raw: Vec<f64> =
        groups.iter().map(|(_, _, idx)| idx.iter().map(|&i| channel_scores[i]).sum::<f64>() / idx.len() as f64).collect();
    let peak = raw.iter().cloned().fold(0.0, f64::max);
    let degenerate = !(peak > 0.0);
    let sensors = groups
        .into_iter()
        .zip(&raw)
        .map(|((id, location, _), &r)| SensorScore { id, location, score: if degenerate { 0.0 } else { r / peak } })
        .collect();
    Ok(AttributionReport { target, method, sensors, degenerate })
}
