//! Named parameter tensors and the checkpoint file format.
//!
//! Checkpoint layout, little-endian: `u64` manifest length, UTF-8 JSON
//! manifest (entry names and shapes plus free-form metadata), then every
//! entry's `f64` values in manifest order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use uem_autodiff::Tensor;

use crate::error::{Error, Result};

/// Ordered name → tensor map. Order is insertion order and fixes the
/// summation and checkpoint order everywhere.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    entries: Vec<(String, Tensor)>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert or replace.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        let name = name.into();
        match self.entries.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = value,
            None => self.entries.push((name, value)),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.iter_mut().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing parameter {name:?}")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.get(name).is_some()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn extend(&mut self, other: ParamStore) {
        for (n, t) in other.entries {
            self.insert(n, t);
        }
    }
}

/// Seed for a named parameter group, independent of which other groups exist.
pub fn group_seed(seed: u64, name: &str) -> u64 {
    // FNV-1a over the name, mixed with the base seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    entries: Vec<ManifestEntry>,
    #[serde(default)]
    meta: serde_json::Value,
}

pub fn write_checkpoint(store: &ParamStore, meta: &serde_json::Value) -> Vec<u8> {
    let manifest = Manifest {
        entries: store
            .iter()
            .map(|(n, t)| ManifestEntry {
                name: n.to_string(),
                shape: t.shape().to_vec(),
            })
            .collect(),
        meta: meta.clone(),
    };
    let json = serde_json::to_vec(&manifest).expect("manifest serializes");
    let mut out = Vec::with_capacity(8 + json.len() + 8 * store.numel());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, t) in store.iter() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<(ParamStore, serde_json::Value)> {
    let short = |need: usize| Error::Truncated {
        expected: need,
        actual: bytes.len(),
    };
    let len_bytes: [u8; 8] = bytes.get(..8).ok_or_else(|| short(8))?.try_into().expect("8 bytes");
    let mlen = u64::from_le_bytes(len_bytes) as usize;
    let json = bytes.get(8..8 + mlen).ok_or_else(|| short(8 + mlen))?;
    let manifest: Manifest =
        serde_json::from_slice(json).map_err(|e| Error::Checkpoint(format!("manifest: {e}")))?;
    let total: usize = manifest
        .entries
        .iter()
        .map(|e| e.shape.iter().product::<usize>())
        .sum();
    let expected = 8 + mlen + 8 * total;
    if bytes.len() != expected {
        return Err(short(expected));
    }
    let mut store = ParamStore::new();
    let mut at = 8 + mlen;
    for e in manifest.entries {
        let n: usize = e.shape.iter().product();
        let data = bytes[at..at + 8 * n]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        at += 8 * n;
        store.insert(e.name, Tensor::new(e.shape, data)?);
    }
    Ok((store, manifest.meta))
}

pub fn save_checkpoint(store: &ParamStore, meta: &serde_json::Value, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_checkpoint(store, meta)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(ParamStore, serde_json::Value)> {
    let path = path.as_ref();
    read_checkpoint(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
