//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes   "HARLCKPT"
//! version  u32       1
//! hlen     u64       length of the JSON header in bytes
//! header   hlen      UTF-8 JSON: config, seed, schema, parameter directory
//! data     …         each parameter's values as f64 LE, in directory order
//! ```
//!
//! The directory lists `name`, `shape`, `offset` (in values, from the start of
//! the data block) and `len` for every parameter, sorted by name.

use serde::{Deserialize, Serialize};

use super::EncoderConfig;
use crate::dataset::Schema;
use crate::diffcore::{DenseArray, ParamStore};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"HARLCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    config: EncoderConfig,
    seed: u64,
    schema: Schema,
    params: Vec<ParamEntry>,
}

/// Everything needed to run a trained encoder on new data.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: EncoderConfig,
    pub schema: Schema,
    pub params: ParamStore,
}

pub fn write_checkpoint(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let mut entries = Vec::new();
    let mut offset = 0;
    for (name, value) in ckpt.params.iter() {
        entries.push(ParamEntry { name: name.to_string(), shape: value.shape().to_vec(), offset, len: value.len() });
        offset += value.len();
    }
    let header = Header {
        config: ckpt.config,
        seed: ckpt.params.seed(),
        schema: ckpt.schema.clone(),
        params: entries,
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Format(e.to_string()))?;
    let mut out = Vec::with_capacity(20 + json.len() + offset * 8);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, value) in ckpt.params.iter() {
        for v in value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn take<'a>(bytes: &'a [u8], at: &mut usize, n: usize) -> Result<&'a [u8]> {
    let end = at.checked_add(n).filter(|&e| e <= bytes.len()).ok_or_else(|| Error::Format("truncated checkpoint".into()))?;
    let slice = &bytes[*at..end];
    *at = end;
    Ok(slice)
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut at = 0;
    if take(bytes, &mut at, 8)? != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(take(bytes, &mut at, 4)?.try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let hlen = u64::from_le_bytes(take(bytes, &mut at, 8)?.try_into().unwrap()) as usize;
    let header: Header =
        serde_json::from_slice(take(bytes, &mut at, hlen)?).map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
    let data_start = at;
    let mut params = ParamStore::new(header.seed);
    for entry in &header.params {
        let mut pos = data_start + entry.offset * 8;
        let raw = take(bytes, &mut pos, entry.len * 8)?;
        let values = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        params.insert(entry.name.clone(), DenseArray::new(entry.shape.clone(), values)?)?;
    }
    let total: usize = header.params.iter().map(|e| e.len).sum();
    if bytes.len() != data_start + total * 8 {
        return Err(Error::Format("checkpoint has trailing or missing data".into()));
    }
    header.config.validate()?;
    Ok(Checkpoint { config: header.config, schema: header.schema, params })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ChannelMeta, Vocabulary};
    use crate::encoder::build_encoder;

    fn ckpt() -> Checkpoint {
        let config = EncoderConfig::desk(2, 20, 3, 2, 4);
        Checkpoint {
            config,
            schema: Schema {
                channels: ChannelMeta::anonymous(2),
                atomic: Vocabulary::from_names(&["a", "b", "c"]).unwrap(),
                complex: Vocabulary::from_names(&["x", "y"]).unwrap(),
            },
            params: build_encoder(&config).unwrap(),
        }
    }

    #[test]
    fn round_trip_is_lossless_and_stable() {
        let c = ckpt();
        let bytes = write_checkpoint(&c).unwrap();
        assert_eq!(&bytes[..8], CHECKPOINT_MAGIC);
        let back = read_checkpoint(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(write_checkpoint(&back).unwrap(), bytes);
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let bytes = write_checkpoint(&ckpt()).unwrap();
        assert!(read_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(read_checkpoint(&bad).is_err());
    }
}
