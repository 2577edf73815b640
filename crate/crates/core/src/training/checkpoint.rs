//! Checkpoint container.
//!
//! Layout: `b"L1CK"`, `u32` version, `u64` header length, a JSON header
//! (config snapshot, epoch, best metric, array names and shapes, optimizer
//! scalars), then every array as little-endian `f64`: parameters sorted by
//! name, then the first moments, then the second moments.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{AdamState, ParamStore, Tensor};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"L1CK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    /// Free-form snapshot of whatever configuration produced the weights.
    pub config: serde_json::Value,
    pub epoch: usize,
    pub best_metric: Option<f64>,
    pub params: ParamStore<f64>,
    pub adam: AdamState<f64>,
}

#[derive(Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct AdamHeader {
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step: u64,
    moments: Vec<ArrayEntry>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    adam: AdamHeader,
    best_metric: Option<f64>,
    config: serde_json::Value,
    epoch: usize,
    params: Vec<ArrayEntry>,
}

fn entries<'a>(it: impl Iterator<Item = (&'a str, &'a Tensor<f64>)>) -> Vec<ArrayEntry> {
    it.map(|(n, t)| ArrayEntry {
        name: n.to_string(),
        shape: t.shape().to_vec(),
    })
    .collect()
}

fn push_f64s(out: &mut Vec<u8>, t: &Tensor<f64>) {
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("checkpoint truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn tensor(&mut self, shape: &[usize]) -> Result<Tensor<f64>> {
        let n: usize = shape.iter().product();
        let raw = self.take(n * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Tensor::new(shape.to_vec(), data).map_err(|e| Error::Format(format!("bad array shape: {e}")))
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        if self.adam.first_moment.keys().ne(self.adam.second_moment.keys()) {
            return Err(Error::Contract("optimizer moment tables disagree".into()));
        }
        let header = Header {
            adam: AdamHeader {
                learning_rate: self.adam.learning_rate,
                beta1: self.adam.beta1,
                beta2: self.adam.beta2,
                epsilon: self.adam.epsilon,
                step: self.adam.step,
                moments: entries(self.adam.first_moment.iter().map(|(k, v)| (k.as_str(), v))),
            },
            best_metric: self.best_metric.filter(|m| m.is_finite()),
            config: self.config.clone(),
            epoch: self.epoch,
            params: entries(self.params.iter()),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in self.params.iter() {
            push_f64s(&mut out, t);
        }
        for t in self.adam.first_moment.values() {
            push_f64s(&mut out, t);
        }
        for t in self.adam.second_moment.values() {
            push_f64s(&mut out, t);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}"
            )));
        }
        let len = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes")) as usize;
        let header: Header = serde_json::from_slice(r.take(len)?)
            .map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
        let mut params = ParamStore::new();
        for e in &header.params {
            params.insert(e.name.clone(), r.tensor(&e.shape)?);
        }
        let mut adam = AdamState::new(header.adam.learning_rate);
        adam.beta1 = header.adam.beta1;
        adam.beta2 = header.adam.beta2;
        adam.epsilon = header.adam.epsilon;
        adam.step = header.adam.step;
        for e in &header.adam.moments {
            adam.first_moment.insert(e.name.clone(), r.tensor(&e.shape)?);
        }
        for e in &header.adam.moments {
            adam.second_moment.insert(e.name.clone(), r.tensor(&e.shape)?);
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after checkpoint arrays",
                bytes.len() - r.pos
            )));
        }
        Ok(Self {
            config: header.config,
            epoch: header.epoch,
            best_metric: header.best_metric,
            params,
            adam,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
