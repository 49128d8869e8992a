use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::diffcore::DenseArray;
use crate::error::{Error, Result};

/// One sensor channel: its column name, the physical sensor it belongs to,
/// and where that sensor sits (body part or place in the space).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelMeta {
    pub name: String,
    pub sensor: String,
    pub location: String,
}

impl ChannelMeta {
    pub fn new(name: impl Into<String>, sensor: impl Into<String>, location: impl Into<String>) -> Self {
        Self { name: name.into(), sensor: sensor.into(), location: location.into() }
    }

    /// Plain `ch_i` channels, each its own sensor with no location.
    pub fn anonymous(count: usize) -> Vec<Self> {
        (0..count).map(|i| Self::new(format!("ch_{i}"), format!("ch_{i}"), "")).collect()
    }
}

/// Distinct sensor ids in first-appearance order, with the channel indices
/// belonging to each.
pub fn sensor_groups(channels: &[ChannelMeta]) -> Vec<(String, String, Vec<usize>)> {
    let mut groups: Vec<(String, String, Vec<usize>)> = Vec::new();
    for (i, ch) in channels.iter().enumerate() {
        match groups.iter_mut().find(|(id, _, _)| *id == ch.sensor) {
            Some((_, _, idx)) => idx.push(i),
            None => groups.push((ch.sensor.clone(), ch.location.clone(), vec![i])),
        }
    }
    groups
}

/// Labels carried by a recording.
#[derive(Debug, Clone, PartialEq)]
pub enum RecordingLabels {
    /// Per-step atomic and complex tracks; `None` is "no activity".
    Dense { atomic: Vec<Option<usize>>, complex: Vec<Option<usize>> },
    /// Segment-level label set without timing.
    Weak { atomic: BTreeSet<usize>, complex: usize },
}

/// A multichannel stream before windowing.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub source_id: String,
    pub channels: Vec<ChannelMeta>,
    pub sample_rate: f64,
    pub timestamps: Vec<f64>,
    /// `[C × T_total]`.
    pub samples: DenseArray,
    pub labels: RecordingLabels,
}

impl Recording {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.timestamps.len();
        if !(self.sample_rate > 0.0) {
            return Err(Error::Format(format!("sample rate {} must be positive", self.sample_rate)));
        }
        if self.samples.shape() != [self.channels.len(), t] {
            return Err(Error::Dimension(format!(
                "samples {:?} do not match {} channels × {t} steps",
                self.samples.shape(),
                self.channels.len()
            )));
        }
        if let RecordingLabels::Dense { atomic, complex } = &self.labels {
            if atomic.len() != t || complex.len() != t {
                return Err(Error::Dimension("label track length differs from sample count".into()));
            }
        }
        Ok(())
    }
}

/// A fixed-shape `[C × T]` window with its channel metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorWindow {
    pub values: DenseArray,
    pub channels: Vec<ChannelMeta>,
    pub sample_rate: f64,
}

impl SensorWindow {
    pub fn new(values: DenseArray, channels: Vec<ChannelMeta>, sample_rate: f64) -> Result<Self> {
        if values.ndim() != 2 || values.shape()[0] != channels.len() {
            return Err(Error::Dimension(format!(
                "window {:?} does not match {} channels",
                values.shape(),
                channels.len()
            )));
        }
        if !(sample_rate > 0.0) {
            return Err(Error::Format("sample rate must be positive".into()));
        }
        Ok(Self { values, channels, sample_rate })
    }

    pub fn channel_count(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn steps(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.channel_count(), self.steps())
    }

    pub fn seconds(&self) -> f64 {
        self.steps() as f64 / self.sample_rate
    }
}

/// A window plus its labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub window: SensorWindow,
    pub complex_label: usize,
    pub weak_atomic: BTreeSet<usize>,
    pub dense_atomic: Option<Vec<Option<usize>>>,
    pub source_id: String,
}

/// Target probability vector over the atomic vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicTarget {
    pub probs: Vec<f64>,
}
