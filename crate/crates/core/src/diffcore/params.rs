use std::collections::HashMap;

use super::{Tape, Tensor, TensorError, Var};
use crate::scalar::Scalar;

/// Named learnable tensors in a fixed insertion order.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<S> {
    names: Vec<String>,
    tensors: Vec<Tensor<S>>,
    index: HashMap<String, usize>,
}

/// Tape handles for every parameter of a store, in store order.
#[derive(Clone, Debug)]
pub struct BoundParams {
    vars: Vec<Var>,
    index: HashMap<String, usize>,
}

impl BoundParams {
    pub fn get(&self, name: &str) -> Var {
        match self.index.get(name) {
            Some(&i) => self.vars[i],
            None => panic!("unknown parameter `{name}`"),
        }
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    /// Pairs names with handles recorded elsewhere, e.g. by a gradient check.
    pub fn from_parts(names: &[String], vars: &[Var]) -> Self {
        assert_eq!(names.len(), vars.len(), "one handle per name");
        Self {
            vars: vars.to_vec(),
            index: names
                .iter()
                .enumerate()
                .map(|(i, n)| (n.clone(), i))
                .collect(),
        }
    }
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<S>) {
        let name = name.into();
        match self.index.get(&name) {
            Some(&i) => self.tensors[i] = tensor,
            None => {
                self.index.insert(name.clone(), self.names.len());
                self.names.push(name);
                self.tensors.push(tensor);
            }
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<S>> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<S>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<S>] {
        &mut self.tensors
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<S>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Records every parameter as a gradient-receiving leaf.
    pub fn bind(&self, tape: &mut Tape<S>) -> BoundParams {
        self.bind_with(tape, true)
    }

    /// Records every parameter as a constant (inference).
    pub fn bind_frozen(&self, tape: &mut Tape<S>) -> BoundParams {
        self.bind_with(tape, false)
    }

    fn bind_with(&self, tape: &mut Tape<S>, requires_grad: bool) -> BoundParams {
        let vars = self
            .tensors
            .iter()
            .map(|t| tape.leaf(t.clone(), requires_grad))
            .collect();
        BoundParams {
            vars,
            index: self.index.clone(),
        }
    }

    /// Gradients of the bound parameters after `backward`, in store order.
    pub fn collect_grads(&self, tape: &Tape<S>, bound: &BoundParams) -> Vec<Option<Tensor<S>>> {
        bound.vars.iter().map(|&v| tape.grad(v)).collect()
    }

    pub fn to_named_f64(&self) -> Vec<(String, Tensor<f64>)> {
        self.iter()
            .map(|(n, t)| (n.to_string(), t.cast()))
            .collect()
    }

    /// Overwrites tensors from a checkpoint; names and shapes must match
    /// exactly.
    pub fn load_named(&mut self, named: &[(String, Tensor<f64>)]) -> Result<(), TensorError> {
        if named.len() != self.len() {
            return Err(TensorError::Format(format!(
                "checkpoint has {} tensors, model expects {}",
                named.len(),
                self.len()
            )));
        }
        for (name, tensor) in named {
            let i = *self
                .index
                .get(name)
                .ok_or_else(|| TensorError::Format(format!("unexpected tensor `{name}`")))?;
            if self.tensors[i].shape() != tensor.shape() {
                return Err(TensorError::Format(format!(
                    "tensor `{name}` has shape {:?}, model expects {:?}",
                    tensor.shape(),
                    self.tensors[i].shape()
                )));
            }
            self.tensors[i] = tensor.cast();
        }
        Ok(())
    }
}
