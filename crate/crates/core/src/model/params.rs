use std::collections::HashMap;

use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Ordered collection of named parameter tensors.
///
/// Order is insertion order and is what checkpoints and optimizer state
/// follow, so two sets built by the same code line up index by index.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet<T: Element = f32> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
    index: HashMap<String, usize>,
}

impl<T: Element> ParamSet<T> {
    pub fn new() -> Self {
        ParamSet {
            names: Vec::new(),
            tensors: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<usize> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::invalid("param set", format!("duplicate parameter {name}")));
        }
        let id = self.names.len();
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.tensors.push(value);
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.position(name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.position(name).map(move |i| &mut self.tensors[i])
    }

    pub fn require(&self, name: &str) -> Result<&Tensor<T>> {
        self.get(name)
            .ok_or_else(|| Error::Format(format!("missing parameter {name}")))
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    /// Total number of scalars.
    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Registers every tensor on `tape` as a trainable leaf.
    pub fn bind(&self, tape: &mut Tape<T>) -> BoundParams<T> {
        BoundParams {
            vars: self.tensors.iter().map(|t| tape.param(t.clone())).collect(),
            index: self.index.clone(),
        }
    }

    /// Pairs already-registered variables with this set's names, in order.
    pub fn bind_vars(&self, vars: Vec<Var<T>>) -> Result<BoundParams<T>> {
        if vars.len() != self.len() {
            return Err(Error::invalid(
                "param set",
                format!("{} variables for {} parameters", vars.len(), self.len()),
            ));
        }
        for ((name, t), v) in self.iter().zip(&vars) {
            if v.shape() != t.shape() {
                return Err(Error::shape("param set", format!("{name} with shape {:?}", t.shape()), v.shape()));
            }
        }
        Ok(BoundParams {
            vars,
            index: self.index.clone(),
        })
    }

    pub fn cast<U: Element>(&self) -> ParamSet<U> {
        ParamSet {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
            index: self.index.clone(),
        }
    }
}

/// Tape variables for a [`ParamSet`], in the same order.
#[derive(Clone, Debug)]
pub struct BoundParams<T: Element = f32> {
    vars: Vec<Var<T>>,
    index: HashMap<String, usize>,
}

impl<T: Element> BoundParams<T> {
    pub fn var(&self, name: &str) -> Result<&Var<T>> {
        self.index
            .get(name)
            .map(|&i| &self.vars[i])
            .ok_or_else(|| Error::Format(format!("missing parameter {name}")))
    }

    pub fn vars(&self) -> &[Var<T>] {
        &self.vars
    }
}
