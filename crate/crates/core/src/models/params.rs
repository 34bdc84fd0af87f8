use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Named trainable tensors, ordered by path. Also used for gradients and
/// optimizer moments, which share the parameter paths.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ModelParams<T> {
    tensors: BTreeMap<String, Tensor<T>>,
}

impl<T: Scalar> ModelParams<T> {
    pub fn new() -> Self {
        ModelParams {
            tensors: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, path: impl Into<String>, tensor: Tensor<T>) -> Result<()> {
        let path = path.into();
        if self.tensors.contains_key(&path) {
            return Err(Error::invalid(format!("duplicate parameter path {path:?}")));
        }
        self.tensors.insert(path, tensor);
        Ok(())
    }

    pub fn get(&self, path: &str) -> Result<&Tensor<T>> {
        self.tensors
            .get(path)
            .ok_or_else(|| Error::invalid(format!("missing parameter {path:?}")))
    }

    pub fn get_mut(&mut self, path: &str) -> Result<&mut Tensor<T>> {
        self.tensors
            .get_mut(path)
            .ok_or_else(|| Error::invalid(format!("missing parameter {path:?}")))
    }

    pub fn contains(&self, path: &str) -> bool {
        self.tensors.contains_key(path)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    /// Total number of scalars.
    pub fn scalar_count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), Tensor::zeros(v.dims())))
                .collect(),
        }
    }

    /// Adds `other` into `self`, creating paths that are absent.
    pub fn accumulate(&mut self, other: &ModelParams<T>) -> Result<()> {
        for (k, v) in &other.tensors {
            match self.tensors.get_mut(k) {
                Some(t) => t.accumulate(v)?,
                None => {
                    self.tensors.insert(k.clone(), v.clone());
                }
            }
        }
        Ok(())
    }

    /// Adds `tensor` into the entry at `path`, creating it if absent.
    pub fn accumulate_at(&mut self, path: &str, tensor: &Tensor<T>) -> Result<()> {
        match self.tensors.get_mut(path) {
            Some(t) => t.accumulate(tensor),
            None => {
                self.tensors.insert(path.to_string(), tensor.clone());
                Ok(())
            }
        }
    }

    pub fn scale(&mut self, s: T) {
        for t in self.tensors.values_mut() {
            t.scale_in_place(s);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.values().all(Tensor::all_finite)
    }

    /// FNV-1a over paths, dims and the raw bit patterns of every scalar.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        let mut buf = Vec::new();
        for (k, v) in &self.tensors {
            eat(k.as_bytes());
            for &d in v.dims() {
                eat(&(d as u64).to_le_bytes());
            }
            buf.clear();
            for &x in v.data() {
                x.write_le(&mut buf);
            }
            eat(&buf);
        }
        h
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), v.cast()))
                .collect(),
        }
    }

    pub fn into_inner(self) -> BTreeMap<String, Tensor<T>> {
        self.tensors
    }
}

impl<T: Scalar> FromIterator<(String, Tensor<T>)> for ModelParams<T> {
    fn from_iter<I: IntoIterator<Item = (String, Tensor<T>)>>(iter: I) -> Self {
        ModelParams {
            tensors: iter.into_iter().collect(),
        }
    }
}
