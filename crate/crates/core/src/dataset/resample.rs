use super::{Recording, RecordingLabels};
use crate::diffcore::DenseArray;
use crate::error::{Error, Result};

/// Tolerance for grid points that land on the last timestamp up to rounding.
const GRID_EPS: f64 = 1e-9;

/// Resamples every channel onto a uniform grid at `target_hz` spanning
/// `[t_first, t_last]`. Sensor values are linearly interpolated; dense label
/// tracks take the nearest original step.
pub fn resample_linear(rec: &Recording, target_hz: f64) -> Result<Recording> {
    if !(target_hz > 0.0) || !target_hz.is_finite() {
        return Err(Error::Config(format!("target rate {target_hz} must be positive")));
    }
    let n = rec.len();
    if n < 2 {
        return Err(Error::Length("resampling needs at least two samples".into()));
    }
    let ts = &rec.timestamps;
    let t0 = ts[0];
    let span = ts[n - 1] - t0;
    let count = (span * target_hz + GRID_EPS).floor() as usize + 1;
    let grid: Vec<f64> = (0..count).map(|k| t0 + k as f64 / target_hz).collect();

    // Left neighbour index and interpolation weight for each grid point.
    let mut left = Vec::with_capacity(count);
    let mut j = 0;
    for &t in &grid {
        while j + 2 < n && ts[j + 1] <= t {
            j += 1;
        }
        let w = ((t - ts[j]) / (ts[j + 1] - ts[j])).clamp(0.0, 1.0);
        left.push((j, w));
    }

    let c = rec.channel_count();
    let src = rec.samples.data();
    let mut data = vec![0.0; c * count];
    for ch in 0..c {
        let row = &src[ch * n..(ch + 1) * n];
        for (k, &(j, w)) in left.iter().enumerate() {
            data[ch * count + k] = if w == 0.0 { row[j] } else { row[j] + w * (row[j + 1] - row[j]) };
        }
    }

    let nearest = |k: usize| {
        let (j, w) = left[k];
        if w <= 0.5 {
            j
        } else {
            j + 1
        }
    };
    let labels = match &rec.labels {
        RecordingLabels::Dense { atomic, complex } => RecordingLabels::Dense {
            atomic: (0..count).map(|k| atomic[nearest(k)]).collect(),
            complex: (0..count).map(|k| complex[nearest(k)]).collect(),
        },
        weak @ RecordingLabels::Weak { .. } => weak.clone(),
    };

    Ok(Recording {
        source_id: rec.source_id.clone(),
        channels: rec.channels.clone(),
        sample_rate: target_hz,
        timestamps: grid,
        samples: DenseArray::new(vec![c, count], data)?,
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ChannelMeta;

    fn rec(values: Vec<f64>, rate: f64) -> Recording {
        let n = values.len();
        Recording {
            source_id: "t".into(),
            channels: ChannelMeta::anonymous(1),
            sample_rate: rate,
            timestamps: (0..n).map(|k| k as f64 / rate).collect(),
            samples: DenseArray::new(vec![1, n], values).unwrap(),
            labels: RecordingLabels::Dense { atomic: vec![Some(0); n], complex: vec![Some(0); n] },
        }
    }

    #[test]
    fn linear_midpoint() {
        let out = resample_linear(&rec(vec![0.0, 1.0], 50.0), 100.0).unwrap();
        assert_eq!(out.samples.data(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn same_rate_is_identity() {
        let values: Vec<f64> = (0..37).map(|k| (k as f64 * 0.3).sin()).collect();
        let r = rec(values, 30.0);
        let out = resample_linear(&r, 30.0).unwrap();
        assert_eq!(out.len(), r.len());
        assert!(out.samples.max_abs_diff(&r.samples) < 1e-12);
    }

    #[test]
    fn downsampled_sinusoid_matches_closed_form() {
        let values: Vec<f64> = (0..=200).map(|k| (2.0 * std::f64::consts::PI * k as f64 / 100.0).sin()).collect();
        let out = resample_linear(&rec(values, 100.0), 50.0).unwrap();
        assert_eq!(out.len(), 101);
        for (k, v) in out.samples.data().iter().enumerate() {
            let expected = (2.0 * std::f64::consts::PI * k as f64 / 50.0).sin();
            assert!((v - expected).abs() < 1e-6);
        }
    }

    #[test]
    fn labels_use_nearest_neighbour() {
        let mut r = rec(vec![0.0, 1.0, 2.0], 1.0);
        r.labels = RecordingLabels::Dense { atomic: vec![Some(0), Some(1), None], complex: vec![Some(0); 3] };
        let out = resample_linear(&r, 4.0).unwrap();
        let RecordingLabels::Dense { atomic, .. } = out.labels else { panic!() };
        // grid 0, .25, .5, .75, 1, …: ties go to the left neighbour.
        assert_eq!(&atomic[..6], &[Some(0), Some(0), Some(0), Some(1), Some(1), Some(1)]);
        assert_eq!(atomic[8], None);
    }

    #[test]
    fn single_sample_is_length_error() {
        assert!(matches!(resample_linear(&rec(vec![1.0], 10.0), 20.0), Err(Error::Length(_))));
    }
}
