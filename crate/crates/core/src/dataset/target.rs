use serde::{Deserialize, Serialize};

use super::{AtomicTarget, Segment};
use crate::error::{Error, Result};

/// How a segment's atomic target distribution is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetMode {
    /// Per-step label frequencies, ignoring unlabelled steps.
    Dense,
    /// Uniform over the segment's listed atomic types.
    Weak,
    /// Dense when the segment has labelled steps, weak otherwise.
    Auto,
}

/// Builds the target distribution over `n_atomic` atomic classes.
pub fn build_atomic_target(seg: &Segment, mode: TargetMode, n_atomic: usize) -> Result<AtomicTarget> {
    match mode {
        TargetMode::Dense => dense_target(seg, n_atomic),
        TargetMode::Weak => weak_target(seg, n_atomic),
        TargetMode::Auto => match dense_target(seg, n_atomic) {
            Ok(t) => Ok(t),
            Err(Error::Input(_)) | Err(Error::DegenerateTarget(_)) => weak_target(seg, n_atomic),
            Err(e) => Err(e),
        },
    }
}

fn check_id(id: usize, n_atomic: usize) -> Result<()> {
    if id >= n_atomic {
        return Err(Error::Label(format!("atomic id {id} outside vocabulary of {n_atomic}")));
    }
    Ok(())
}

fn dense_target(seg: &Segment, n_atomic: usize) -> Result<AtomicTarget> {
    let dense = seg
        .dense_atomic
        .as_ref()
        .ok_or_else(|| Error::Input(format!("segment `{}` has no dense atomic labels", seg.source_id)))?;
    let mut counts = vec![0usize; n_atomic];
    for &id in dense.iter().flatten() {
        check_id(id, n_atomic)?;
        counts[id] += 1;
    }
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(Error::DegenerateTarget(format!("segment `{}` has no labelled steps", seg.source_id)));
    }
    Ok(AtomicTarget { probs: counts.iter().map(|&c| c as f64 / total as f64).collect() })
}

fn weak_target(seg: &Segment, n_atomic: usize) -> Result<AtomicTarget> {
    if seg.weak_atomic.is_empty() {
        return Err(Error::Input(format!("segment `{}` has an empty atomic set", seg.source_id)));
    }
    let share = 1.0 / seg.weak_atomic.len() as f64;
    let mut probs = vec![0.0; n_atomic];
    for &id in &seg.weak_atomic {
        check_id(id, n_atomic)?;
        probs[id] = share;
    }
    Ok(AtomicTarget { probs })
}
