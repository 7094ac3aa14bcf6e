//! Named parameter tensors and their binding into a differentiation graph.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};

use crate::numerics::{DiffGraph, NodeId, Tensor};
use crate::{Error, Result};

/// Parameters keyed by a stable dotted path such as `backbone.stage1.weight`.
#[derive(Clone, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ParamStore {
    tensors: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn insert(&mut self, path: impl Into<String>, value: Tensor) {
        self.tensors.insert(path.into(), value);
    }

    pub fn get(&self, path: &str) -> Result<&Tensor> {
        self.tensors
            .get(path)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown parameter {path}")))
    }

    pub fn get_mut(&mut self, path: &str) -> Result<&mut Tensor> {
        self.tensors
            .get_mut(path)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown parameter {path}")))
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

    /// Total number of scalar entries.
    pub fn numel(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.tensors.iter_mut()
    }

    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    /// Records every parameter as a trainable leaf of `graph`.
    pub fn bind(&self, graph: &mut DiffGraph) -> Bindings {
        let nodes = self
            .tensors
            .iter()
            .map(|(path, t)| (path.clone(), graph.param(t.clone())))
            .collect();
        Bindings { nodes }
    }
}

/// Graph nodes of a bound [`ParamStore`].
#[derive(Clone, Debug, Default)]
pub struct Bindings {
    nodes: BTreeMap<String, NodeId>,
}

impl Bindings {
    pub fn node(&self, path: &str) -> Result<NodeId> {
        self.nodes
            .get(path)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("parameter {path} is not bound")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &NodeId)> {
        self.nodes.iter()
    }

    /// Gradients accumulated on the bound leaves, keyed like the store.
    pub fn gradients(&self, graph: &DiffGraph) -> BTreeMap<String, alloc::vec::Vec<f64>> {
        self.nodes.iter().map(|(p, &id)| (p.to_string(), graph.grad(id).to_vec())).collect()
    }
}
