//! On-disk dataset layout.
//!
//! ```text
//! <dir>/channels.tsv          index<TAB>name<TAB>sensor<TAB>location
//! <dir>/atomic.tsv            id<TAB>name[<TAB>location]
//! <dir>/complex.tsv           id<TAB>name
//! <dir>/<split>/manifest.tsv  segment_path<TAB>atomic1;atomic2;…<TAB>complex_label
//! <dir>/<split>/*.csv         headerless timestamp,ch_0..ch_{C-1}
//! ```
//!
//! Segment paths in a manifest are relative to its split directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use harlens::dataset::{
    parse_segment_manifest, serialize_manifest_rows, serialize_segment_csv, uniform_timestamps, ManifestRow, Schema,
    Segment, Vocabulary,
};

use crate::run::{read_text, write_file, CliError};

pub const CHANNELS_FILE: &str = "channels.tsv";
pub const ATOMIC_FILE: &str = "atomic.tsv";
pub const COMPLEX_FILE: &str = "complex.tsv";
pub const MANIFEST_FILE: &str = "manifest.tsv";

pub fn read_schema(dir: &Path) -> Result<Schema, CliError> {
    Ok(Schema {
        channels: Schema::parse_channels(&read_text(&dir.join(CHANNELS_FILE))?)?,
        atomic: Vocabulary::parse(&read_text(&dir.join(ATOMIC_FILE))?)?,
        complex: Vocabulary::parse(&read_text(&dir.join(COMPLEX_FILE))?)?,
    })
}

pub fn read_split(dir: &Path, split: &str, schema: &Schema) -> Result<Vec<Segment>, CliError> {
    let split_dir = dir.join(split);
    let manifest = read_text(&split_dir.join(MANIFEST_FILE))?;
    let rows = harlens::dataset::parse_manifest_rows(&manifest, schema)?;
    let mut files = BTreeMap::new();
    for row in &rows {
        let path = split_dir.join(&row.path);
        if let Ok(text) = fs::read_to_string(&path) {
            files.insert(row.path.clone(), text);
        }
    }
    Ok(parse_segment_manifest(&manifest, &files, schema)?)
}

/// Writes the schema files and one split; returns the written paths.
pub fn write_schema(dir: &Path, schema: &Schema) -> Result<Vec<PathBuf>, CliError> {
    let files = [
        (CHANNELS_FILE, Schema::serialize_channels(&schema.channels)),
        (ATOMIC_FILE, schema.atomic.serialize()),
        (COMPLEX_FILE, schema.complex.serialize()),
    ];
    files
        .into_iter()
        .map(|(name, text)| {
            let path = dir.join(name);
            write_file(&path, text.as_bytes())?;
            Ok(path)
        })
        .collect()
}

pub fn write_split(dir: &Path, split: &str, segments: &[Segment], schema: &Schema) -> Result<Vec<PathBuf>, CliError> {
    let split_dir = dir.join(split);
    let mut written = Vec::new();
    let mut rows = Vec::new();
    for seg in segments {
        let name = format!("{}.csv", seg.source_id);
        let ts = uniform_timestamps(seg.window.steps(), seg.window.sample_rate);
        let path = split_dir.join(&name);
        write_file(&path, serialize_segment_csv(&ts, &seg.window.values).as_bytes())?;
        written.push(path);
        rows.push(ManifestRow { path: name, atomic: seg.weak_atomic.clone(), complex: seg.complex_label });
    }
    let manifest = split_dir.join(MANIFEST_FILE);
    write_file(&manifest, serialize_manifest_rows(&rows, schema)?.as_bytes())?;
    written.push(manifest);
    Ok(written)
}

/// Every regular file under `dir`, sorted by relative path.
pub fn list_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let entries = fs::read_dir(&d).map_err(|e| CliError::Input(format!("{}: {e}", d.display())))?;
        for entry in entries {
            let path = entry.map_err(|e| CliError::Input(e.to_string()))?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}
