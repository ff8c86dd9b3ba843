use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

/// Named parameter tensors with matching gradient buffers, iterated in
/// insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
    by_name: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(Error::InvalidArgument(format!("duplicate parameter `{name}`")));
        }
        let grad = Tensor::zeros(value.shape());
        let id = self.params.len();
        self.by_name.insert(name.clone(), id);
        self.params.push(Param { name, value, grad });
        Ok(ParamId(id))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).map(|&i| ParamId(i))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    /// Maps a flat scalar index onto `(parameter, offset)`.
    pub fn locate(&self, mut flat: usize) -> Option<(ParamId, usize)> {
        for (i, p) in self.params.iter().enumerate() {
            if flat < p.value.len() {
                return Some((ParamId(i), flat));
            }
            flat -= p.value.len();
        }
        None
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().fill(0.0);
        }
    }

    /// Adds `scale · grads` into the stored gradient buffers.
    pub fn accumulate(&mut self, grads: &Gradients, scale: f64) {
        for (p, g) in self.params.iter_mut().zip(&grads.params) {
            if let Some(g) = g {
                for (dst, src) in p.grad.data_mut().iter_mut().zip(g.data()) {
                    *dst += scale * src;
                }
            }
        }
    }
}

/// Parameter gradients produced by one backward pass. Parameters that did
/// not take part in the recorded graph have no entry.
#[derive(Clone, Debug, Default)]
pub struct Gradients {
    pub(crate) params: Vec<Option<Tensor>>,
    pub(crate) leaves: Vec<(u32, Tensor)>,
}

impl Gradients {
    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.params.get(id.0).and_then(|g| g.as_ref())
    }

    pub fn input(&self, var: super::Var) -> Option<&Tensor> {
        self.leaves.iter().find(|(i, _)| *i == var.id).map(|(_, g)| g)
    }
}
