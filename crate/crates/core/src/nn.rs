//! Named parameter storage and its binding onto a [`Graph`].

use crate::autograd::{Graph, Var};
use crate::error::{bail, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Ordered, named tensors. Used both for learnable parameters and for
/// non-learnable buffers such as batch-norm running statistics.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T> {
    names: Vec<String>,
    values: Vec<Tensor<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { names: Vec::new(), values: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.values.iter_mut()
    }

    /// Total scalar count.
    pub fn numel(&self) -> usize {
        self.values.iter().map(Tensor::numel).sum()
    }

    /// Overwrites every tensor from `(name, tensor)` pairs, which must match
    /// this store's names, order and shapes.
    pub fn load(&mut self, entries: Vec<(String, Tensor<T>)>) -> Result<()> {
        if entries.len() != self.values.len() {
            bail!(Format, "expected {} tensors, found {}", self.values.len(), entries.len());
        }
        for (i, (name, t)) in entries.into_iter().enumerate() {
            if name != self.names[i] || t.shape() != self.values[i].shape() {
                bail!(
                    Format,
                    "tensor {i}: expected {} {}, found {name} {}",
                    self.names[i],
                    self.values[i].shape(),
                    t.shape()
                );
            }
            self.values[i] = t;
        }
        Ok(())
    }

    /// Records every tensor as a gradient-tracked leaf.
    pub fn bind(&self, g: &mut Graph<T>) -> Binding {
        Binding { vars: self.values.iter().map(|v| g.param(v.clone())).collect() }
    }

    /// Records every tensor as a constant leaf.
    pub fn bind_frozen(&self, g: &mut Graph<T>) -> Binding {
        Binding { vars: self.values.iter().map(|v| g.constant(v.clone())).collect() }
    }
}

/// Mapping from store entries to the graph leaves they were bound to.
#[derive(Clone, Debug)]
pub struct Binding {
    vars: Vec<Var>,
}

impl Binding {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    /// Gradients in store order; parameters the loss did not reach get zeros.
    pub fn grads<T: Scalar>(&self, g: &Graph<T>) -> Vec<Tensor<T>> {
        self.vars
            .iter()
            .map(|&v| g.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(g.shape(v))))
            .collect()
    }
}
