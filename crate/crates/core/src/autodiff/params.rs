use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::scalar::Scalar;

/// Named parameter arrays, kept sorted by name.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore<S> {
    tensors: BTreeMap<String, Tensor<S>>,
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        Self {
            tensors: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor<S>) {
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<S>> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<S>> {
        self.tensors.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<S>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Every parameter whose name starts with `prefix`.
    pub fn subset(&self, prefix: &str) -> ParamStore<S> {
        ParamStore {
            tensors: self
                .tensors
                .iter()
                .filter(|(k, _)| k.starts_with(prefix))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    pub fn extend(&mut self, other: ParamStore<S>) {
        self.tensors.extend(other.tensors);
    }

    /// SHA-256 over names, shapes and the little-endian bytes of the values
    /// (as `f64`), for the parameters under `prefix`.
    pub fn digest(&self, prefix: &str) -> String {
        let mut h = Sha256::new();
        for (name, t) in self.tensors.iter().filter(|(k, _)| k.starts_with(prefix)) {
            h.update(name.as_bytes());
            for d in t.shape() {
                h.update((*d as u64).to_le_bytes());
            }
            for v in t.data() {
                h.update(v.as_f64().to_le_bytes());
            }
        }
        format!("{:x}", h.finalize())
    }
}

/// Parameters placed on a tape, with trainability decided per name.
#[derive(Clone, Debug)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    /// Places every parameter on `tape`; names for which `trainable` returns
    /// `false` become constants and never receive gradients.
    pub fn bind<S: Scalar>(
        tape: &mut Tape<S>,
        params: &ParamStore<S>,
        trainable: impl Fn(&str) -> bool,
    ) -> Self {
        let vars = params
            .iter()
            .map(|(name, t)| (name.to_string(), tape.leaf(t.clone(), trainable(name))))
            .collect();
        Self { vars }
    }

    /// Pairs already-placed variables with parameter names.
    pub fn from_vars<'a>(pairs: impl IntoIterator<Item = (&'a str, Var)>) -> Self {
        Self {
            vars: pairs.into_iter().map(|(n, v)| (n.to_string(), v)).collect(),
        }
    }

    pub fn var(&self, name: &str) -> crate::error::Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| crate::error::Error::Lookup(format!("parameter {name} is not bound")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }
}
