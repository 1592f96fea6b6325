use std::ops::Index;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Rng, Shape, Tensor, Var};
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(usize);

/// Flat, ordered collection of learnable tensors. Layers hold [`ParamId`]s
/// into it; a forward pass binds the whole set into a [`Graph`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    tensors: Vec<Tensor>,
    names: Vec<String>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.tensors.push(value);
        self.names.push(name.into());
        ParamId(self.tensors.len() - 1)
    }

    /// Weight matrix with Glorot-uniform entries in `±√(6/(fan_in+fan_out))`.
    pub fn add_glorot(
        &mut self,
        name: impl Into<String>,
        fan_in: usize,
        fan_out: usize,
        rng: &mut Rng,
    ) -> Result<ParamId> {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let w = rng.uniform(&Shape::new(vec![fan_in, fan_out])?, -bound, bound)?;
        Ok(self.add(name, w))
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, dims: Vec<usize>) -> Result<ParamId> {
        Ok(self.add(name, Tensor::zeros(dims)?))
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Records every parameter as a differentiable leaf.
    pub fn bind(&self, g: &Graph) -> Bound {
        Bound {
            vars: self.tensors.iter().map(|t| g.param(t.clone())).collect(),
        }
    }

    /// Records every parameter as a constant (inference only).
    pub fn bind_frozen(&self, g: &Graph) -> Bound {
        Bound {
            vars: self.tensors.iter().map(|t| g.constant(t.clone())).collect(),
        }
    }
}

/// Graph handles of a bound [`ParamSet`].
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    /// Same bindings with one parameter swapped for another graph value.
    pub fn replaced(mut self, id: ParamId, var: Var) -> Bound {
        self.vars[id.0] = var;
        self
    }

    /// Gradients after `backward`; zeros for parameters the root does not reach.
    pub fn gradients(&self, g: &Graph) -> Vec<Tensor> {
        self.vars
            .iter()
            .map(|&v| {
                g.grad(v).unwrap_or_else(|| {
                    let shape = g.shape(v);
                    let n = shape.numel();
                    Tensor::from_shape(shape, vec![0.0; n]).expect("shape")
                })
            })
            .collect()
    }
}

impl Index<ParamId> for Bound {
    type Output = Var;

    fn index(&self, id: ParamId) -> &Var {
        &self.vars[id.0]
    }
}
