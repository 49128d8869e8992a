//! Sensor attribution, temporal localization and the explanation manifest.

mod attribution;
mod localize;
mod manifest;
mod prompt;

pub use attribution::{
    sensor_attribution, sensor_attribution_with, AttributionMethod, AttributionReport, AttributionTarget, SensorScore,
};
pub use localize::{
    atomic_relevance, intervals_from_relevance, primary_interval, temporal_localization, temporal_localization_with,
    LocalizationOptions, RelevanceMode, TemporalInterval,
};
pub use manifest::{
    build_manifest, explain_window, AtomicEntry, ComplexEntry, ExplanationManifest, HighlightRule, IntervalSpan,
    ManifestOptions, SensorEntry, MANIFEST_SCHEMA_VERSION,
};
pub use prompt::{render_prompt, render_template, validate_template, DEFAULT_COLOR, DEFAULT_TEMPLATE};
