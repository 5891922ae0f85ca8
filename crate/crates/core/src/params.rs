//! Named parameter collections.
//!
//! A `ParameterStore` maps path-like names ("denoiser.audio_enc.0.attn.wq")
//! to tensors. Iteration order is always sorted by name, which keeps
//! checkpoints, optimizer sweeps and gradient reductions deterministic.
//! Buffers (batch-norm running statistics and similar non-trainable state)
//! live in the same map but are excluded from gradient-driven updates.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug, Default)]
pub struct ParameterStore<S> {
    entries: BTreeMap<String, Tensor<S>>,
    buffers: BTreeSet<String>,
}

impl<S: Scalar> ParameterStore<S> {
    pub fn new() -> Self {
        ParameterStore {
            entries: BTreeMap::new(),
            buffers: BTreeSet::new(),
        }
    }

    /// Register a trainable parameter. Names must be unique.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<S>) {
        let name = name.into();
        assert!(
            self.entries.insert(name.clone(), value).is_none(),
            "duplicate parameter name '{name}'"
        );
    }

    /// Register a non-trainable buffer (saved in checkpoints, never updated
    /// by the optimizer).
    pub fn insert_buffer(&mut self, name: impl Into<String>, value: Tensor<S>) {
        let name = name.into();
        self.buffers.insert(name.clone());
        assert!(
            self.entries.insert(name.clone(), value).is_none(),
            "duplicate parameter name '{name}'"
        );
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<S>> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn set(&mut self, name: &str, value: Tensor<S>) -> Result<()> {
        match self.entries.get_mut(name) {
            Some(slot) => {
                *slot = value;
                Ok(())
            }
            None => Err(Error::UnknownParameter(name.to_string())),
        }
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn is_buffer(&self, name: &str) -> bool {
        self.buffers.contains(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sorted iteration over every entry, buffers included.
    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<S>)> {
        self.entries.iter()
    }

    /// Sorted iteration over trainable parameters only.
    pub fn iter_trainable(&self) -> impl Iterator<Item = (&String, &Tensor<S>)> {
        self.entries.iter().filter(|(n, _)| !self.buffers.contains(*n))
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    /// Names under a dotted prefix (e.g. everything in "denoiser.style_enc").
    pub fn names_under<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = &'a String> + 'a {
        self.entries
            .keys()
            .filter(move |n| n.as_str() == prefix || n.starts_with(&format!("{prefix}.")))
    }

    pub fn trainable_value_count(&self) -> usize {
        self.iter_trainable().map(|(_, t)| t.len()).sum()
    }

    pub fn cast<T: Scalar>(&self) -> ParameterStore<T> {
        ParameterStore {
            entries: self
                .entries
                .iter()
                .map(|(n, t)| (n.clone(), t.cast::<T>()))
                .collect(),
            buffers: self.buffers.clone(),
        }
    }

    /// Bitwise equality of every entry, used by freeze contracts in tests.
    pub fn bit_identical(&self, other: &ParameterStore<S>) -> bool {
        if self.entries.len() != other.entries.len() {
            return false;
        }
        self.entries.iter().zip(other.entries.iter()).all(|((an, at), (bn, bt))| {
            an == bn
                && at.shape() == bt.shape()
                && at
                    .data()
                    .iter()
                    .zip(bt.data().iter())
                    .all(|(x, y)| x.to_f().to_bits() == y.to_f().to_bits())
        })
    }

    /// Merge another store under this one; names must not collide.
    pub fn absorb(&mut self, other: ParameterStore<S>) {
        for name in &other.buffers {
            self.buffers.insert(name.clone());
        }
        for (name, value) in other.entries {
            assert!(
                self.entries.insert(name.clone(), value).is_none(),
                "duplicate parameter name '{name}' while merging stores"
            );
        }
    }

    /// Extract the sub-store under a dotted prefix (names kept verbatim).
    pub fn subset(&self, prefix: &str) -> ParameterStore<S> {
        let mut out = ParameterStore::new();
        for name in self.names_under(prefix) {
            let t = self.entries[name].clone();
            if self.buffers.contains(name) {
                out.insert_buffer(name.clone(), t);
            } else {
                out.insert(name.clone(), t);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iteration_is_sorted() {
        let mut store = ParameterStore::<f32>::new();
        store.insert("b", Tensor::scalar(2.0));
        store.insert("a", Tensor::scalar(1.0));
        store.insert("a.c", Tensor::scalar(3.0));
        let names: Vec<_> = store.names().cloned().collect();
        assert_eq!(names, vec!["a", "a.c", "b"]);
    }

    #[test]
    fn buffers_excluded_from_trainable() {
        let mut store = ParameterStore::<f32>::new();
        store.insert("w", Tensor::zeros(2, 2));
        store.insert_buffer("bn.running_mean", Tensor::zeros(1, 2));
        assert_eq!(store.iter_trainable().count(), 1);
        assert_eq!(store.iter().count(), 2);
        assert!(store.is_buffer("bn.running_mean"));
    }

    #[test]
    fn prefix_subset() {
        let mut store = ParameterStore::<f32>::new();
        store.insert("m.a", Tensor::scalar(1.0));
        store.insert("m.b", Tensor::scalar(2.0));
        store.insert("other", Tensor::scalar(3.0));
        let sub = store.subset("m");
        assert_eq!(sub.len(), 2);
        assert!(sub.contains("m.a") && sub.contains("m.b"));
    }
}
