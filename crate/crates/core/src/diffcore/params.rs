use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::DenseArray;
use crate::error::{Error, Result};

/// Named parameter arrays plus the seed they were initialized from.
///
/// Names are kept sorted so iteration (and anything serialized from it) is
/// stable across runs.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    seed: u64,
    params: BTreeMap<String, DenseArray>,
}

impl ParamStore {
    pub fn new(seed: u64) -> Self {
        Self { seed, params: BTreeMap::new() }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn insert(&mut self, name: impl Into<String>, value: DenseArray) -> Result<()> {
        let name = name.into();
        if self.params.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter name `{name}`")));
        }
        if !value.is_finite() {
            return Err(Error::Numeric(format!("parameter `{name}` is not finite")));
        }
        self.params.insert(name, value);
        Ok(())
    }

    /// Replaces an existing parameter, keeping its shape.
    pub fn set(&mut self, name: &str, value: DenseArray) -> Result<()> {
        let slot = self
            .params
            .get_mut(name)
            .ok_or_else(|| Error::Config(format!("unknown parameter `{name}`")))?;
        if slot.shape() != value.shape() {
            return Err(Error::Dimension(format!(
                "parameter `{name}` has shape {:?}, got {:?}",
                slot.shape(),
                value.shape()
            )));
        }
        *slot = value;
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&DenseArray> {
        self.params
            .get(name)
            .ok_or_else(|| Error::Config(format!("unknown parameter `{name}`")))
    }

    pub(crate) fn get_mut(&mut self, name: &str) -> Option<&mut DenseArray> {
        self.params.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &DenseArray)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.params.values().map(DenseArray::len).sum()
    }
}

/// Seeded initializer. Parameters are drawn in the order they are requested,
/// so the same sequence of calls with the same seed is bit-reproducible.
pub struct ParamInit {
    rng: ChaCha8Rng,
    store: ParamStore,
}

impl ParamInit {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed), store: ParamStore::new(seed) }
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn uniform_fan_in(&mut self, name: &str, shape: &[usize], fan_in: usize) -> Result<()> {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| self.rng.gen_range(-bound..=bound)).collect();
        self.store.insert(name, DenseArray::new(shape.to_vec(), data)?)
    }

    pub fn constant(&mut self, name: &str, shape: &[usize], value: f64) -> Result<()> {
        self.store.insert(name, DenseArray::filled(shape, value))
    }

    /// Overwrites a slice of an already-initialized parameter.
    pub fn fill_range(&mut self, name: &str, range: std::ops::Range<usize>, value: f64) -> Result<()> {
        let p = self
            .store
            .get_mut(name)
            .ok_or_else(|| Error::Config(format!("unknown parameter `{name}`")))?;
        p.data_mut()[range].iter_mut().for_each(|v| *v = value);
        Ok(())
    }

    pub fn finish(self) -> ParamStore {
        self.store
    }
}
