use std::collections::BTreeSet;

use super::{Recording, RecordingLabels, Segment, SensorWindow};
use crate::diffcore::DenseArray;
use crate::error::{Error, Result};

/// Number of full windows of `window` samples at stride `stride` in `total`.
pub fn window_count(total: usize, window: usize, stride: usize) -> usize {
    if window == 0 || stride == 0 || window > total {
        0
    } else {
        (total - window) / stride + 1
    }
}

/// Majority vote over labelled steps; ties go to the lowest class id.
fn majority(track: &[Option<usize>]) -> Option<usize> {
    let max_id = track.iter().flatten().copied().max()?;
    let mut counts = vec![0usize; max_id + 1];
    for id in track.iter().flatten() {
        counts[*id] += 1;
    }
    let best = *counts.iter().max()?;
    counts.iter().position(|&c| c == best)
}

/// Cuts fixed-length windows. Window and stride lengths are rounded to whole
/// samples at the recording's rate; a trailing partial window is dropped.
///
/// Dense recordings label each window with the majority complex class of its
/// steps; windows with no labelled complex step are skipped. Weak
/// recordings pass their segment labels to every window.
pub fn slide_windows(rec: &Recording, window_s: f64, stride_s: f64) -> Result<Vec<Segment>> {
    if !(stride_s > 0.0) || !(window_s > 0.0) {
        return Err(Error::Window("window and stride must be positive".into()));
    }
    let w = (window_s * rec.sample_rate).round() as usize;
    let s = ((stride_s * rec.sample_rate).round() as usize).max(1);
    let total = rec.len();
    if w == 0 || w > total {
        return Err(Error::Window(format!(
            "window of {w} samples does not fit a recording of {total} samples"
        )));
    }
    let c = rec.channel_count();
    let src = rec.samples.data();
    let mut out = Vec::with_capacity(window_count(total, w, s));
    for k in 0..window_count(total, w, s) {
        let start = k * s;
        let mut data = Vec::with_capacity(c * w);
        for ch in 0..c {
            data.extend_from_slice(&src[ch * total + start..ch * total + start + w]);
        }
        let window = SensorWindow::new(DenseArray::new(vec![c, w], data)?, rec.channels.clone(), rec.sample_rate)?;
        let source_id = format!("{}#{k}", rec.source_id);
        match &rec.labels {
            RecordingLabels::Dense { atomic, complex } => {
                let Some(label) = majority(&complex[start..start + w]) else { continue };
                let dense = atomic[start..start + w].to_vec();
                let weak: BTreeSet<usize> = dense.iter().flatten().copied().collect();
                out.push(Segment { window, complex_label: label, weak_atomic: weak, dense_atomic: Some(dense), source_id });
            }
            RecordingLabels::Weak { atomic, complex } => out.push(Segment {
                window,
                complex_label: *complex,
                weak_atomic: atomic.clone(),
                dense_atomic: None,
                source_id,
            }),
        }
    }
    Ok(out)
}
