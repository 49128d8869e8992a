//! Synthetic recordings with known ground truth.
//!
//! Each segment concatenates a few atomic "bursts". An atomic activity is a
//! sinusoid with its own carrier frequency and amplitude written onto its
//! active channels only; every other channel stays silent apart from noise.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{ChannelMeta, Schema, Segment, SensorWindow, Vocabulary};
use crate::diffcore::DenseArray;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicSignature {
    pub frequency_hz: f64,
    pub amplitude: f64,
    pub channels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub atomic_names: Vec<String>,
    pub complex_names: Vec<String>,
    /// Location of each physical sensor; channels are assigned to sensors in
    /// consecutive blocks of `channels_per_sensor`.
    pub sensor_locations: Vec<String>,
    pub channels_per_sensor: usize,
    pub sample_rate: f64,
    /// Atomic ids that may appear in each complex class.
    pub recipes: Vec<Vec<usize>>,
    pub signatures: Vec<AtomicSignature>,
    pub noise_sigma: f64,
    pub segment_seconds: f64,
    pub segments_per_class: usize,
    /// Distinct atomics drawn from the recipe for each segment.
    pub atomics_per_segment: usize,
    /// 0 gives equal-length bursts; up to 1 makes burst lengths vary by that
    /// relative amount.
    pub duration_jitter: f64,
    /// Share of the segment covered by bursts. Below 1 the bursts fill one
    /// randomly chosen slot of this length (slots tile the segment from the
    /// start) and the remaining steps are silent and unlabelled.
    pub active_fraction: f64,
    pub seed: u64,
}

const DEFAULT_ATOMICS: [&str; 9] = ["add", "cut", "mix", "open", "take", "pour", "wash", "peel", "stir"];
const DEFAULT_COMPLEX: [&str; 3] = ["making sandwich", "making fruit salad", "making cereal"];
const DEFAULT_LOCATIONS: [&str; 4] = ["right arm", "left hip", "left wrist", "right wrist"];

impl Default for SynthSpec {
    /// 9 atomics, 3 complex classes, 4 three-axis sensors (12 channels).
    /// Atomic `a` lives on sensor `a % 4`, axis `a / 4`, so every atomic has a
    /// channel of its own and each recipe spans several sensors.
    fn default() -> Self {
        let signatures = (0..9)
            .map(|a| AtomicSignature {
                frequency_hz: 1.0 + 0.5 * a as f64,
                amplitude: 1.0,
                channels: vec![3 * (a % 4) + a / 4],
            })
            .collect();
        Self {
            atomic_names: DEFAULT_ATOMICS.iter().map(|s| s.to_string()).collect(),
            complex_names: DEFAULT_COMPLEX.iter().map(|s| s.to_string()).collect(),
            sensor_locations: DEFAULT_LOCATIONS.iter().map(|s| s.to_string()).collect(),
            channels_per_sensor: 3,
            sample_rate: 20.0,
            recipes: vec![vec![0, 1, 2], vec![3, 4, 5], vec![6, 7, 8]],
            signatures,
            noise_sigma: 0.1,
            segment_seconds: 4.0,
            segments_per_class: 250,
            atomics_per_segment: 2,
            duration_jitter: 0.0,
            active_fraction: 1.0,
            seed: 7,
        }
    }
}

/// Generated train/test splits plus the schema describing them.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub schema: Schema,
    pub train: Vec<Segment>,
    pub test: Vec<Segment>,
}

impl SynthSpec {
    pub fn channel_count(&self) -> usize {
        self.sensor_locations.len() * self.channels_per_sensor
    }

    pub fn steps(&self) -> usize {
        (self.segment_seconds * self.sample_rate).round() as usize
    }

    pub fn channels(&self) -> Vec<ChannelMeta> {
        let mut out = Vec::new();
        for (s, loc) in self.sensor_locations.iter().enumerate() {
            for _ in 0..self.channels_per_sensor {
                let idx = out.len();
                out.push(ChannelMeta::new(format!("ch_{idx}"), format!("sensor_{s}"), loc.clone()));
            }
        }
        out
    }

    /// Steps covered by bursts in each segment.
    pub fn active_steps(&self) -> usize {
        ((self.steps() as f64 * self.active_fraction).round() as usize).clamp(1, self.steps())
    }

    pub fn schema(&self) -> Result<Schema> {
        Ok(Schema {
            channels: self.channels(),
            atomic: Vocabulary::from_names(&self.atomic_names)?,
            complex: Vocabulary::from_names(&self.complex_names)?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.atomic_names.len();
        let m = self.complex_names.len();
        let c = self.channel_count();
        let cfg = |msg: String| Err(Error::Config(msg));
        if n == 0 || m == 0 || c == 0 {
            return cfg("vocabularies and channel list must be non-empty".into());
        }
        if self.recipes.len() != m {
            return cfg(format!("{} recipes for {m} complex classes", self.recipes.len()));
        }
        if self.signatures.len() != n {
            return cfg(format!("{} signatures for {n} atomic classes", self.signatures.len()));
        }
        for (k, recipe) in self.recipes.iter().enumerate() {
            if recipe.is_empty() {
                return cfg(format!("recipe {k} is empty"));
            }
            if let Some(a) = recipe.iter().find(|&&a| a >= n) {
                return cfg(format!("recipe {k} references unknown atomic id {a}"));
            }
            if recipe.iter().collect::<BTreeSet<_>>().len() < self.atomics_per_segment {
                return cfg(format!("recipe {k} has fewer than {} distinct atomics", self.atomics_per_segment));
            }
        }
        for (a, sig) in self.signatures.iter().enumerate() {
            if sig.channels.is_empty() || sig.channels.iter().any(|&ch| ch >= c) {
                return cfg(format!("signature {a} has an empty or out-of-range channel set"));
            }
            if !(sig.frequency_hz > 0.0) || !sig.amplitude.is_finite() {
                return cfg(format!("signature {a} needs a positive frequency and finite amplitude"));
            }
        }
        if !(self.sample_rate > 0.0) || !(self.segment_seconds > 0.0) || !(self.noise_sigma >= 0.0) {
            return cfg("sample rate, duration must be positive and noise non-negative".into());
        }
        if !(self.active_fraction > 0.0 && self.active_fraction <= 1.0) {
            return cfg("active_fraction must lie in (0, 1]".into());
        }
        if self.atomics_per_segment == 0 || self.active_steps() < self.atomics_per_segment {
            return cfg("each segment needs at least one step per burst".into());
        }
        if !(0.0..1.0).contains(&self.duration_jitter) {
            return cfg("duration_jitter must lie in [0, 1)".into());
        }
        if self.segments_per_class == 0 {
            return cfg("segments_per_class must be positive".into());
        }
        Ok(())
    }
}

/// Splits `total` steps into `parts` positive lengths proportional to `weights`.
fn burst_lengths(total: usize, weights: &[f64]) -> Vec<usize> {
    let parts = weights.len();
    let spare = total - parts;
    let sum: f64 = weights.iter().sum();
    let mut lens: Vec<usize> = weights.iter().map(|w| 1 + (spare as f64 * w / sum).floor() as usize).collect();
    let used: usize = lens.iter().sum();
    *lens.last_mut().unwrap() += total - used;
    lens
}

/// Generates the dataset. Per class, the first 80% of segments (in
/// generation order) go to train and the rest to test.
pub fn synth_generate(spec: &SynthSpec) -> Result<SynthDataset> {
    spec.validate()?;
    let schema = spec.schema()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::Config(e.to_string()))?;
    let (c, steps) = (spec.channel_count(), spec.steps());
    let n_train = (spec.segments_per_class * 4).div_ceil(5);
    let (mut train, mut test) = (Vec::new(), Vec::new());

    for (class, recipe) in spec.recipes.iter().enumerate() {
        let pool: Vec<usize> = recipe.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        for j in 0..spec.segments_per_class {
            let chosen: Vec<usize> = pool.choose_multiple(&mut rng, spec.atomics_per_segment).copied().collect();
            let weights: Vec<f64> = chosen
                .iter()
                .map(|_| 1.0 + spec.duration_jitter * rng.gen_range(-1.0..=1.0))
                .collect();
            let active = spec.active_steps();
            let lens = burst_lengths(active, &weights);
            let slots = steps / active;
            let offset = if slots > 1 { active * rng.gen_range(0..slots) } else { 0 };

            let mut data = vec![0.0; c * steps];
            let mut dense = vec![None; offset];
            let mut start = offset;
            for (&atomic, &len) in chosen.iter().zip(&lens) {
                let sig = &spec.signatures[atomic];
                let phase = rng.gen_range(0.0..std::f64::consts::TAU);
                for t in start..start + len {
                    let v = sig.amplitude
                        * (std::f64::consts::TAU * sig.frequency_hz * t as f64 / spec.sample_rate + phase).sin();
                    for &ch in &sig.channels {
                        data[ch * steps + t] += v;
                    }
                }
                dense.extend(std::iter::repeat(Some(atomic)).take(len));
                start += len;
            }
            dense.resize(steps, None);
            if spec.noise_sigma > 0.0 {
                for v in data.iter_mut() {
                    *v += noise.sample(&mut rng);
                }
            }

            let seg = Segment {
                window: SensorWindow::new(DenseArray::new(vec![c, steps], data)?, schema.channels.clone(), spec.sample_rate)?,
                complex_label: class,
                weak_atomic: chosen.iter().copied().collect(),
                dense_atomic: Some(dense),
                source_id: format!("c{class}_s{j:04}"),
            };
            if j < n_train {
                train.push(seg);
            } else {
                test.push(seg);
            }
        }
    }
    Ok(SynthDataset { schema, train, test })
}
