//! Sensor recordings, windowing, atomic target construction and a synthetic
//! data generator with known ground truth.

mod io;
mod resample;
mod synth;
mod target;
mod types;
mod vocab;
mod window;

pub use io::{
    parse_dense_recording, parse_manifest_rows, parse_segment_csv, parse_segment_manifest, parse_segment_window, parse_weak_recordings,
    segment_to_recording, serialize_dense_recording, serialize_manifest_rows, serialize_segment_csv,
    uniform_timestamps, ManifestRow, NULL_LABEL,
};
pub use resample::resample_linear;
pub use synth::{synth_generate, AtomicSignature, SynthDataset, SynthSpec};
pub use target::{build_atomic_target, TargetMode};
pub use types::{sensor_groups, AtomicTarget, ChannelMeta, Recording, RecordingLabels, Segment, SensorWindow};
pub use vocab::{Schema, VocabEntry, Vocabulary};
pub use window::{slide_windows, window_count};
