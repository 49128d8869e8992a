//! The explanation manifest handed to a downstream generator.
//!
//! JSON layout (version 1), fields in this order:
//!
//! ```text
//! schema_version     integer, currently 1
//! window_id          string
//! complex            {id, name, probability}
//! atomic             [{id, name, probability, interval: {start_s, end_s, confidence} | null}]
//!                    entries above the atomic cutoff, highest probability first
//! sensors            [{id, location, score, highlight}] in channel order
//! attribution        {target: {kind, id}, method, degenerate}
//! atomic_cutoff      real
//! highlight_cutoff   real; sensors with score ≥ this are highlighted (+inf when none)
//! color              string
//! template           string
//! prompt             string, render of `template` over the fields above
//! ```

use serde::{Deserialize, Serialize};

use super::attribution::{sensor_attribution_with, AttributionMethod, AttributionReport, AttributionTarget};
use super::localize::{primary_interval, temporal_localization_with, LocalizationOptions, TemporalInterval};
use super::prompt::{render_prompt, validate_template, DEFAULT_COLOR, DEFAULT_TEMPLATE};
use crate::dataset::{sensor_groups, Schema, SensorWindow};
use crate::diffcore::ParamStore;
use crate::encoder::{encoder_forward, EncoderConfig, PredictionRecord};
use crate::error::{Error, Result};
use crate::metrics::DEFAULT_THRESHOLD;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HighlightRule {
    /// The highest-scoring sensor(s); none when every score is zero.
    Top,
    /// Every sensor scoring at least this value.
    Cutoff(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ManifestOptions {
    pub atomic_cutoff: f64,
    pub highlight: HighlightRule,
    pub color: String,
    pub template: String,
    pub attribution_method: AttributionMethod,
    pub localization: LocalizationOptions,
}

impl Default for ManifestOptions {
    fn default() -> Self {
        Self {
            atomic_cutoff: DEFAULT_THRESHOLD,
            highlight: HighlightRule::Top,
            color: DEFAULT_COLOR.to_string(),
            template: DEFAULT_TEMPLATE.to_string(),
            attribution_method: AttributionMethod::default(),
            localization: LocalizationOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexEntry {
    pub id: usize,
    pub name: String,
    pub probability: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalSpan {
    pub start_s: f64,
    pub end_s: f64,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicEntry {
    pub id: usize,
    pub name: String,
    pub probability: f64,
    pub interval: Option<IntervalSpan>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorEntry {
    pub id: String,
    pub location: String,
    pub score: f64,
    pub highlight: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionSummary {
    pub target: AttributionTarget,
    pub method: AttributionMethod,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplanationManifest {
    pub schema_version: u32,
    pub window_id: String,
    pub complex: ComplexEntry,
    pub atomic: Vec<AtomicEntry>,
    pub sensors: Vec<SensorEntry>,
    pub attribution: AttributionSummary,
    pub atomic_cutoff: f64,
    #[serde(with = "cutoff_repr")]
    pub highlight_cutoff: f64,
    pub color: String,
    pub template: String,
    pub prompt: String,
}

/// JSON has no infinity; "no sensor highlighted" is written as null.
mod cutoff_repr {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

impl ExplanationManifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text).map_err(|e| Error::Format(format!("manifest: {e}")))?;
        if m.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::Format(format!("unsupported manifest schema version {}", m.schema_version)));
        }
        Ok(m)
    }

    /// Re-renders the prompt from the other fields.
    pub fn regenerate_prompt(&self) -> Result<String> {
        render_prompt(self, &self.template)
    }
}

pub fn build_manifest(
    window_id: &str,
    pred: &PredictionRecord,
    attr: &AttributionReport,
    intervals: &[TemporalInterval],
    schema: &Schema,
    opts: &ManifestOptions,
) -> Result<ExplanationManifest> {
    if pred.atomic_probs.len() != schema.atomic.len() || pred.complex_probs.len() != schema.complex.len() {
        return Err(Error::Schema(format!(
            "prediction has {} atomic / {} complex classes, vocabularies have {} / {}",
            pred.atomic_probs.len(),
            pred.complex_probs.len(),
            schema.atomic.len(),
            schema.complex.len()
        )));
    }
    let groups = sensor_groups(&schema.channels);
    if groups.len() != attr.sensors.len() || groups.iter().zip(&attr.sensors).any(|((id, _, _), s)| *id != s.id) {
        return Err(Error::Schema("attribution sensors do not match the schema's channel map".into()));
    }
    if let Some(iv) = intervals.iter().find(|iv| iv.atomic >= schema.atomic.len()) {
        return Err(Error::Schema(format!("interval for atomic id {} outside the vocabulary", iv.atomic)));
    }
    validate_template(&opts.template)?;

    let c = pred.complex_argmax;
    let complex = ComplexEntry { id: c, name: schema.complex.name(c)?.to_string(), probability: pred.complex_probs[c] };

    let mut ids: Vec<usize> = (0..pred.atomic_probs.len()).filter(|&i| pred.atomic_probs[i] > opts.atomic_cutoff).collect();
    ids.sort_by(|&a, &b| pred.atomic_probs[b].total_cmp(&pred.atomic_probs[a]).then(a.cmp(&b)));
    let atomic = ids
        .into_iter()
        .map(|i| {
            let own: Vec<TemporalInterval> = intervals.iter().filter(|iv| iv.atomic == i).copied().collect();
            Ok(AtomicEntry {
                id: i,
                name: schema.atomic.name(i)?.to_string(),
                probability: pred.atomic_probs[i],
                interval: primary_interval(&own)
                    .map(|iv| IntervalSpan { start_s: iv.start_s, end_s: iv.end_s, confidence: iv.confidence }),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let peak = attr.sensors.iter().map(|s| s.score).fold(0.0, f64::max);
    let highlight_cutoff = match opts.highlight {
        HighlightRule::Top if peak > 0.0 => peak,
        HighlightRule::Top => f64::INFINITY,
        HighlightRule::Cutoff(v) => v,
    };
    let sensors = attr
        .sensors
        .iter()
        .map(|s| SensorEntry {
            id: s.id.clone(),
            location: s.location.clone(),
            score: s.score,
            highlight: s.score >= highlight_cutoff,
        })
        .collect();

    let mut manifest = ExplanationManifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        window_id: window_id.to_string(),
        complex,
        atomic,
        sensors,
        attribution: AttributionSummary { target: attr.target, method: attr.method, degenerate: attr.degenerate },
        atomic_cutoff: opts.atomic_cutoff,
        highlight_cutoff,
        color: opts.color.clone(),
        template: opts.template.clone(),
        prompt: String::new(),
    };
    manifest.prompt = manifest.regenerate_prompt()?;
    Ok(manifest)
}

/// Forward pass, attribution for the predicted complex class, localization of
/// every atomic above the cutoff, and the resulting manifest.
pub fn explain_window(
    cfg: &EncoderConfig,
    params: &ParamStore,
    window: &SensorWindow,
    schema: &Schema,
    window_id: &str,
    opts: &ManifestOptions,
) -> Result<ExplanationManifest> {
    if window.channels.len() != schema.channels.len()
        || window.channels.iter().zip(&schema.channels).any(|(a, b)| a.name != b.name)
    {
        return Err(Error::Schema("window channels do not match the checkpoint schema".into()));
    }
    let pred = encoder_forward(cfg, params, window)?;
    let attr =
        sensor_attribution_with(cfg, params, window, AttributionTarget::Complex(pred.complex_argmax), opts.attribution_method)?;
    let mut intervals = Vec::new();
    for (i, &p) in pred.atomic_probs.iter().enumerate() {
        if p > opts.atomic_cutoff {
            intervals.extend(temporal_localization_with(cfg, params, window, i, &opts.localization)?);
        }
    }
    build_manifest(window_id, &pred, &attr, &intervals, schema, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ChannelMeta, Vocabulary};
    use crate::diffcore::DenseArray;
    use crate::explain::SensorScore;

    fn schema() -> Schema {
        let locations = ["hip", "wrist", "arm", "ankle"];
        Schema {
            channels: locations.iter().enumerate().map(|(i, l)| ChannelMeta::new(format!("c{i}"), format!("s{i}"), *l)).collect(),
            atomic: Vocabulary::from_names(&["opening the door", "pouring water", "stirring"]).unwrap(),
            complex: Vocabulary::from_names(&["making coffee", "cleaning"]).unwrap(),
        }
    }

    fn attribution(scores: [f64; 4]) -> AttributionReport {
        let s = schema();
        AttributionReport {
            target: AttributionTarget::Complex(0),
            method: AttributionMethod::Activation,
            sensors: s
                .channels
                .iter()
                .zip(scores)
                .map(|(c, score)| SensorScore { id: c.sensor.clone(), location: c.location.clone(), score })
                .collect(),
            degenerate: scores.iter().all(|&v| v == 0.0),
        }
    }

    fn pred(atomic: Vec<f64>) -> PredictionRecord {
        PredictionRecord { atomic_probs: atomic, complex_probs: vec![0.9, 0.1], complex_argmax: 0, activation_cache: DenseArray::scalar(0.0) }
    }

    #[test]
    fn highest_activation_sensor_is_highlighted() {
        let m = build_manifest("w", &pred(vec![0.7, 0.2, 0.1]), &attribution([0.1, 0.2, 0.8, 0.5]), &[], &schema(), &ManifestOptions::default())
            .unwrap();
        let flags: Vec<bool> = m.sensors.iter().map(|s| s.highlight).collect();
        assert_eq!(flags, vec![false, false, true, false]);
        assert_eq!(m.prompt, "Someone is opening the door, complex activity \"making coffee\"; highlight the arm sensor in yellow");
    }

    #[test]
    fn nothing_above_cutoff_leaves_complex_only() {
        let m = build_manifest("w", &pred(vec![0.34, 0.33, 0.33]), &attribution([0.0; 4]), &[], &schema(), &ManifestOptions::default())
            .unwrap();
        assert!(m.atomic.is_empty());
        assert!(m.sensors.iter().all(|s| !s.highlight));
        assert_eq!(m.prompt, "complex activity \"making coffee\"");
    }

    #[test]
    fn json_round_trip_is_byte_identical() {
        let iv = TemporalInterval { atomic: 0, start_s: 0.2, end_s: 1.4, confidence: 0.61 };
        for scores in [[0.1, 0.2, 0.8, 0.5], [0.0; 4]] {
            let m = build_manifest("seg#3", &pred(vec![0.5, 0.45, 0.05]), &attribution(scores), &[iv], &schema(), &ManifestOptions::default())
                .unwrap();
            let text = m.to_json();
            let back = ExplanationManifest::from_json(&text).unwrap();
            assert_eq!(back.to_json(), text);
            assert_eq!(back.regenerate_prompt().unwrap(), m.prompt);
        }
    }

    #[test]
    fn vocabulary_mismatch_is_schema_error() {
        let r = build_manifest("w", &pred(vec![0.5, 0.5]), &attribution([1.0; 4]), &[], &schema(), &ManifestOptions::default());
        assert!(matches!(r, Err(Error::Schema(_))));
    }
}
