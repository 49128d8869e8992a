//! Text formats: dense-labelled CSV recordings, headerless segment CSVs and
//! the weak-label segment manifest.

use std::collections::{BTreeMap, BTreeSet};

use super::{ChannelMeta, Recording, RecordingLabels, Schema, Segment, SensorWindow};
use crate::diffcore::DenseArray;
use crate::error::{Error, Result};

pub const NULL_LABEL: &str = "null";
const TIMESTAMP: &str = "timestamp";
const ATOMIC_COL: &str = "atomic_label";
const COMPLEX_COL: &str = "complex_label";

fn csv_err(e: csv::Error) -> Error {
    let row = e.position().map_or(0, |p| p.line() as usize);
    Error::Format(format!("csv line {row}: {e}"))
}

fn parse_number(cell: &str, row: usize, column: &str) -> Result<f64> {
    let v: f64 = cell
        .trim()
        .parse()
        .map_err(|_| Error::Parse { row, message: format!("column `{column}`: `{cell}` is not a number") })?;
    if !v.is_finite() {
        return Err(Error::Parse { row, message: format!("column `{column}`: non-finite value") });
    }
    Ok(v)
}

fn parse_label(cell: &str, vocab: &super::Vocabulary, row: usize) -> Result<Option<usize>> {
    let cell = cell.trim();
    if cell == NULL_LABEL || cell.is_empty() {
        return Ok(None);
    }
    vocab
        .id(cell)
        .map(Some)
        .ok_or_else(|| Error::Vocabulary(format!("row {row}: unknown label `{cell}`")))
}

/// Sample rate implied by evenly spread timestamps.
fn infer_rate(timestamps: &[f64]) -> Result<f64> {
    if timestamps.len() < 2 {
        return Err(Error::Length("at least two samples are needed to infer a sample rate".into()));
    }
    let span = timestamps[timestamps.len() - 1] - timestamps[0];
    let rate = (timestamps.len() - 1) as f64 / span;
    // Timestamps written with finite precision; snap to a micro-hertz grid.
    Ok((rate * 1e6).round() / 1e6)
}

fn check_monotone(timestamps: &[f64]) -> Result<()> {
    match timestamps.windows(2).position(|w| w[1] <= w[0]) {
        Some(i) => Err(Error::Order { row: i + 2 }),
        None => Ok(()),
    }
}

/// Transposes row-major `[T × C]` samples into a `[C × T]` array.
fn channels_major(rows: &[f64], steps: usize, channels: usize) -> Result<DenseArray> {
    let mut data = vec![0.0; rows.len()];
    for t in 0..steps {
        for c in 0..channels {
            data[c * steps + t] = rows[t * channels + c];
        }
    }
    DenseArray::new(vec![channels, steps], data)
}

/// Parses a dense-labelled recording with header
/// `timestamp,<channel names…>,atomic_label,complex_label`.
///
/// Data rows are numbered from 1 in error messages.
pub fn parse_dense_recording(text: &str, schema: &Schema, source_id: &str) -> Result<Recording> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers().map_err(csv_err)?.iter().map(|h| h.trim().to_string()).collect();
    let c = schema.channels.len();
    let expected: Vec<&str> = std::iter::once(TIMESTAMP)
        .chain(schema.channels.iter().map(|ch| ch.name.as_str()))
        .chain([ATOMIC_COL, COMPLEX_COL])
        .collect();
    for col in &expected {
        if !header.iter().any(|h| h == col) {
            return Err(Error::Format(format!("missing column `{col}`")));
        }
    }
    if header != expected {
        return Err(Error::Format(format!("header must be `{}`", expected.join(","))));
    }

    let (mut timestamps, mut rows, mut atomic, mut complex) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(csv_err)?;
        timestamps.push(parse_number(&record[0], row, TIMESTAMP)?);
        for (ch, meta) in schema.channels.iter().enumerate() {
            rows.push(parse_number(&record[ch + 1], row, &meta.name)?);
        }
        atomic.push(parse_label(&record[c + 1], &schema.atomic, row)?);
        complex.push(parse_label(&record[c + 2], &schema.complex, row)?);
    }
    check_monotone(&timestamps)?;
    let sample_rate = infer_rate(&timestamps)?;
    let steps = timestamps.len();
    let rec = Recording {
        source_id: source_id.to_string(),
        channels: schema.channels.clone(),
        sample_rate,
        timestamps,
        samples: channels_major(&rows, steps, c)?,
        labels: RecordingLabels::Dense { atomic, complex },
    };
    rec.validate()?;
    Ok(rec)
}

fn label_token(id: Option<usize>, vocab: &super::Vocabulary) -> Result<String> {
    match id {
        None => Ok(NULL_LABEL.to_string()),
        Some(id) => vocab.name(id).map(str::to_string),
    }
}

/// Writes a dense recording in the format read by [`parse_dense_recording`].
pub fn serialize_dense_recording(rec: &Recording, schema: &Schema) -> Result<String> {
    let RecordingLabels::Dense { atomic, complex } = &rec.labels else {
        return Err(Error::Format("only dense-labelled recordings can be written as dense CSV".into()));
    };
    let mut out = String::from(TIMESTAMP);
    for ch in &rec.channels {
        out.push(',');
        out.push_str(&ch.name);
    }
    out.push_str(&format!(",{ATOMIC_COL},{COMPLEX_COL}\n"));
    let steps = rec.len();
    for t in 0..steps {
        out.push_str(&rec.timestamps[t].to_string());
        for c in 0..rec.channel_count() {
            out.push(',');
            out.push_str(&rec.samples.data()[c * steps + t].to_string());
        }
        out.push(',');
        out.push_str(&label_token(atomic[t], &schema.atomic)?);
        out.push(',');
        out.push_str(&label_token(complex[t], &schema.complex)?);
        out.push('\n');
    }
    Ok(out)
}

/// Parses a headerless `timestamp,ch_0..ch_{C-1}` segment file into
/// timestamps and `[C × T]` samples.
pub fn parse_segment_csv(text: &str, channels: usize) -> Result<(Vec<f64>, DenseArray)> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
    let (mut timestamps, mut rows) = (Vec::new(), Vec::new());
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(csv_err)?;
        if record.len() != channels + 1 {
            return Err(Error::Format(format!(
                "row {row}: expected {} columns, found {}",
                channels + 1,
                record.len()
            )));
        }
        timestamps.push(parse_number(&record[0], row, TIMESTAMP)?);
        for c in 0..channels {
            rows.push(parse_number(&record[c + 1], row, &format!("ch_{c}"))?);
        }
    }
    if timestamps.is_empty() {
        return Err(Error::Length("segment file has no rows".into()));
    }
    check_monotone(&timestamps)?;
    let steps = timestamps.len();
    Ok((timestamps, channels_major(&rows, steps, channels)?))
}

/// Writes a `[C × T]` block as a headerless segment CSV.
pub fn serialize_segment_csv(timestamps: &[f64], samples: &DenseArray) -> String {
    let (c, t) = (samples.shape()[0], samples.shape()[1]);
    let mut out = String::new();
    for (step, ts) in timestamps.iter().enumerate().take(t) {
        out.push_str(&ts.to_string());
        for ch in 0..c {
            out.push(',');
            out.push_str(&samples.data()[ch * t + step].to_string());
        }
        out.push('\n');
    }
    out
}

/// Parses one headerless segment file as a window over `channels`, inferring
/// the sample rate from its timestamps.
pub fn parse_segment_window(text: &str, channels: &[ChannelMeta]) -> Result<SensorWindow> {
    let (timestamps, samples) = parse_segment_csv(text, channels.len())?;
    SensorWindow::new(samples, channels.to_vec(), infer_rate(&timestamps)?)
}

/// Evenly spaced timestamps starting at zero.
pub fn uniform_timestamps(steps: usize, sample_rate: f64) -> Vec<f64> {
    (0..steps).map(|k| k as f64 / sample_rate).collect()
}

/// One parsed manifest row.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub path: String,
    pub atomic: BTreeSet<usize>,
    pub complex: usize,
}

/// Parses `segment_path<TAB>atomic1;atomic2;…<TAB>complex_label` lines.
pub fn parse_manifest_rows(manifest: &str, schema: &Schema) -> Result<Vec<ManifestRow>> {
    let mut out = Vec::new();
    for (i, line) in manifest.lines().enumerate() {
        let row = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(Error::Format(format!("manifest row {row}: expected 3 tab-separated fields")));
        }
        let mut atomic = BTreeSet::new();
        for token in cols[1].split(';').map(str::trim).filter(|t| !t.is_empty()) {
            let id = schema
                .atomic
                .id(token)
                .ok_or_else(|| Error::Vocabulary(format!("manifest row {row}: unknown atomic type `{token}`")))?;
            atomic.insert(id);
        }
        if atomic.is_empty() {
            return Err(Error::Vocabulary(format!("manifest row {row}: empty atomic type list")));
        }
        let complex = schema
            .complex
            .id(cols[2].trim())
            .ok_or_else(|| Error::Vocabulary(format!("manifest row {row}: unknown complex label `{}`", cols[2])))?;
        out.push(ManifestRow { path: cols[0].to_string(), atomic, complex });
    }
    Ok(out)
}

pub fn serialize_manifest_rows(rows: &[ManifestRow], schema: &Schema) -> Result<String> {
    let mut out = String::new();
    for r in rows {
        let names = r.atomic.iter().map(|&a| schema.atomic.name(a)).collect::<Result<Vec<_>>>()?;
        out.push_str(&format!("{}\t{}\t{}\n", r.path, names.join(";"), schema.complex.name(r.complex)?));
    }
    Ok(out)
}

/// Parses a weak-label manifest into one recording per row. `segment_files`
/// maps the manifest's paths to file contents.
pub fn parse_weak_recordings(
    manifest: &str,
    segment_files: &BTreeMap<String, String>,
    schema: &Schema,
) -> Result<Vec<Recording>> {
    let rows = parse_manifest_rows(manifest, schema)?;
    rows.into_iter()
        .map(|r| {
            let text = segment_files
                .get(&r.path)
                .ok_or_else(|| Error::Io(format!("segment file `{}` not found", r.path)))?;
            let (timestamps, samples) = parse_segment_csv(text, schema.channels.len())
                .map_err(|e| Error::Format(format!("{}: {e}", r.path)))?;
            let sample_rate = infer_rate(&timestamps)?;
            Ok(Recording {
                source_id: r.path,
                channels: schema.channels.clone(),
                sample_rate,
                timestamps,
                samples,
                labels: RecordingLabels::Weak { atomic: r.atomic, complex: r.complex },
            })
        })
        .collect()
}

/// One segment per manifest row, each spanning its whole file.
pub fn parse_segment_manifest(
    manifest: &str,
    segment_files: &BTreeMap<String, String>,
    schema: &Schema,
) -> Result<Vec<Segment>> {
    parse_weak_recordings(manifest, segment_files, schema)?
        .into_iter()
        .map(|rec| {
            let RecordingLabels::Weak { atomic, complex } = rec.labels else { unreachable!() };
            Ok(Segment {
                window: SensorWindow::new(rec.samples, rec.channels, rec.sample_rate)?,
                complex_label: complex,
                weak_atomic: atomic,
                dense_atomic: None,
                source_id: rec.source_id,
            })
        })
        .collect()
}

/// Rebuilds a recording from a segment, with uniform timestamps. Dense
/// labels are kept when present; the complex label is repeated per step.
pub fn segment_to_recording(seg: &Segment) -> Recording {
    let steps = seg.window.steps();
    let labels = match &seg.dense_atomic {
        Some(dense) => RecordingLabels::Dense { atomic: dense.clone(), complex: vec![Some(seg.complex_label); steps] },
        None => RecordingLabels::Weak { atomic: seg.weak_atomic.clone(), complex: seg.complex_label },
    };
    Recording {
        source_id: seg.source_id.clone(),
        channels: seg.window.channels.clone(),
        sample_rate: seg.window.sample_rate,
        timestamps: uniform_timestamps(steps, seg.window.sample_rate),
        samples: seg.window.values.clone(),
        labels,
    }
}
