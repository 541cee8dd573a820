use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::neural::Tensor;

/// Named collection of tensors, iterated in sorted-name order.
///
/// Positions in the sorted order are stable for the lifetime of the set and
/// double as parameter handles on a [`Tape`](crate::neural::Tape).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParameterSet {
    entries: Vec<(String, Tensor)>,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a tensor; names must be unique.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        match self.position(&name) {
            Ok(_) => Err(Error::Config(format!("parameter `{name}` registered twice"))),
            Err(at) => {
                self.entries.insert(at, (name, tensor));
                Ok(())
            }
        }
    }

    fn position(&self, name: &str) -> std::result::Result<usize, usize> {
        self.entries.binary_search_by(|(n, _)| n.as_str().cmp(name))
    }

    pub fn remove(&mut self, name: &str) -> Option<Tensor> {
        self.position(name).ok().map(|i| self.entries.remove(i).1)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.position(name).ok()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index_of(name).map(|i| &self.entries[i].1)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index_of(name).map(move |i| &mut self.entries[i].1)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn at(&self, index: usize) -> &Tensor {
        &self.entries[index].1
    }

    pub fn at_mut(&mut self, index: usize) -> &mut Tensor {
        &mut self.entries[index].1
    }

    pub fn name_at(&self, index: usize) -> &str {
        &self.entries[index].0
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    /// Names and shapes, the part of a set that must agree between a model
    /// definition and a checkpoint.
    pub fn manifest(&self) -> BTreeMap<String, Vec<usize>> {
        self.iter()
            .map(|(n, t)| (n.to_string(), t.shape().to_vec()))
            .collect()
    }

    /// A zero-filled set with the same names and shapes.
    pub fn zeros_like(&self) -> Self {
        ParameterSet {
            entries: self
                .entries
                .iter()
                .map(|(n, t)| (n.clone(), Tensor::zeros(t.shape())))
                .collect(),
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.entries
            .iter()
            .map(|(_, t)| t.sum_squares())
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, t) in &mut self.entries {
            t.values_mut().iter_mut().for_each(|v| *v *= factor);
        }
    }

    /// `self += other * factor`, element-wise; both sets must share a manifest.
    pub fn add_scaled(&mut self, other: &ParameterSet, factor: f64) -> Result<()> {
        self.check_same_layout(other, "add_scaled")?;
        for ((_, a), (_, b)) in self.entries.iter_mut().zip(&other.entries) {
            for (x, y) in a.values_mut().iter_mut().zip(b.values()) {
                *x += factor * y;
            }
        }
        Ok(())
    }

    pub(crate) fn check_same_layout(&self, other: &ParameterSet, op: &'static str) -> Result<()> {
        if self.entries.len() != other.entries.len() {
            return Err(Error::shape(op, &[self.len()], &[other.len()]));
        }
        for ((na, a), (nb, b)) in self.entries.iter().zip(&other.entries) {
            if na != nb {
                return Err(Error::UnknownParameter(nb.clone()));
            }
            if a.shape() != b.shape() {
                return Err(Error::shape(op, a.shape(), b.shape()));
            }
        }
        Ok(())
    }
}

/// Gradients laid out like the [`ParameterSet`] they were taken against.
pub type Gradients = ParameterSet;
