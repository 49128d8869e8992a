use serde::{Deserialize, Serialize};

use super::ChannelMeta;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabEntry {
    pub name: String,
    pub location: Option<String>,
}

/// Ordered label vocabulary; ids are positions.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Vocabulary {
    entries: Vec<VocabEntry>,
}

/// Labels that never enter an atomic vocabulary.
const EXCLUDED: &[&str] = &["other", "null"];

impl Vocabulary {
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let mut v = Self::default();
        for n in names {
            v.push(n.as_ref(), None)?;
        }
        Ok(v)
    }

    pub fn push(&mut self, name: &str, location: Option<String>) -> Result<usize> {
        let name = name.trim();
        if name.is_empty() {
            return Err(Error::Vocabulary("empty label name".into()));
        }
        if EXCLUDED.contains(&name.to_ascii_lowercase().as_str()) {
            return Err(Error::Vocabulary(format!("`{name}` is reserved and cannot be a vocabulary label")));
        }
        if self.id(name).is_some() {
            return Err(Error::Vocabulary(format!("duplicate label `{name}`")));
        }
        self.entries.push(VocabEntry { name: name.to_string(), location });
        Ok(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.name == name)
    }

    pub fn lookup(&self, name: &str) -> Result<usize> {
        self.id(name).ok_or_else(|| Error::Vocabulary(format!("unknown label `{name}`")))
    }

    pub fn name(&self, id: usize) -> Result<&str> {
        self.entries
            .get(id)
            .map(|e| e.name.as_str())
            .ok_or_else(|| Error::Label(format!("label id {id} outside vocabulary of {}", self.len())))
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.name.as_str()).collect()
    }

    pub fn entries(&self) -> &[VocabEntry] {
        &self.entries
    }

    /// Parses `id<TAB>name<TAB>optional-location` lines. Ids must run 0, 1, …
    pub fn parse(text: &str) -> Result<Self> {
        let mut v = Self::default();
        for (row, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() < 2 || cols.len() > 3 {
                return Err(Error::Format(format!("vocabulary line {}: expected 2 or 3 tab-separated fields", row + 1)));
            }
            let id: usize = cols[0]
                .trim()
                .parse()
                .map_err(|_| Error::Parse { row: row + 1, message: format!("bad id `{}`", cols[0]) })?;
            if id != v.len() {
                return Err(Error::Vocabulary(format!("vocabulary ids must be consecutive, found {id} at position {}", v.len())));
            }
            let loc = cols.get(2).map(|s| s.to_string()).filter(|s| !s.is_empty());
            v.push(cols[1], loc)?;
        }
        Ok(v)
    }

    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for (i, e) in self.entries.iter().enumerate() {
            match &e.location {
                Some(loc) => out.push_str(&format!("{i}\t{}\t{loc}\n", e.name)),
                None => out.push_str(&format!("{i}\t{}\n", e.name)),
            }
        }
        out
    }
}

/// Everything needed to interpret a dataset's files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub channels: Vec<ChannelMeta>,
    pub atomic: Vocabulary,
    pub complex: Vocabulary,
}

impl Schema {
    /// Parses a channel file of `index<TAB>name<TAB>sensor<TAB>location` lines.
    pub fn parse_channels(text: &str) -> Result<Vec<ChannelMeta>> {
        let mut out = Vec::new();
        for (row, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 4 {
                return Err(Error::Format(format!("channel line {}: expected 4 tab-separated fields", row + 1)));
            }
            let idx: usize = cols[0]
                .trim()
                .parse()
                .map_err(|_| Error::Parse { row: row + 1, message: format!("bad channel index `{}`", cols[0]) })?;
            if idx != out.len() {
                return Err(Error::Format(format!("channel indices must be consecutive, found {idx}")));
            }
            out.push(ChannelMeta::new(cols[1], cols[2], cols[3]));
        }
        if out.is_empty() {
            return Err(Error::Format("channel file lists no channels".into()));
        }
        Ok(out)
    }

    pub fn serialize_channels(channels: &[ChannelMeta]) -> String {
        channels
            .iter()
            .enumerate()
            .map(|(i, c)| format!("{i}\t{}\t{}\t{}\n", c.name, c.sensor, c.location))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vocabulary_round_trip() {
        let text = "0\tstand\n1\twalk\tleft foot\n2\ttrip\n";
        let v = Vocabulary::parse(text).unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v.lookup("walk").unwrap(), 1);
        assert_eq!(v.entries()[1].location.as_deref(), Some("left foot"));
        assert_eq!(v.serialize(), text);
    }

    #[test]
    fn other_is_excluded() {
        assert!(matches!(Vocabulary::from_names(&["cut", "other"]), Err(Error::Vocabulary(_))));
    }

    #[test]
    fn non_consecutive_ids_rejected() {
        assert!(Vocabulary::parse("0\ta\n2\tb\n").is_err());
    }
}
