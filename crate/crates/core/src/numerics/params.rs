//! Named trainable parameters with matching gradient slots.

use std::collections::BTreeMap;

use crate::numerics::tensor::Tensor;

/// Parameter store keyed by name. A `BTreeMap` keeps iteration order
/// deterministic, which the optimizer, checkpoints and gradient checker
/// all rely on.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    params: BTreeMap<String, Tensor>,
    grads: BTreeMap<String, Tensor>,
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self {
            params: BTreeMap::new(),
            grads: BTreeMap::new(),
        }
    }

    /// Registers a parameter with a zeroed gradient slot. Names must be
    /// unique.
    pub fn insert(&mut self, name: &str, tensor: Tensor) {
        assert!(
            !self.params.contains_key(name),
            "duplicate parameter `{name}`"
        );
        self.grads
            .insert(name.to_string(), Tensor::zeros(tensor.shape().to_vec()));
        self.params.insert(name.to_string(), tensor);
    }

    pub fn get(&self, name: &str) -> &Tensor {
        self.params
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter `{name}`"))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Tensor {
        self.params
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter `{name}`"))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn grad(&self, name: &str) -> &Tensor {
        self.grads
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter `{name}`"))
    }

    pub fn zero_grads(&mut self) {
        for grad in self.grads.values_mut() {
            grad.fill(0.0);
        }
    }

    /// grad[name] += scale * delta.
    pub fn accumulate_grad(&mut self, name: &str, delta: &Tensor, scale: f64) {
        let grad = self
            .grads
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter `{name}`"));
        assert_eq!(grad.shape(), delta.shape());
        for (g, &d) in grad.data_mut().iter_mut().zip(delta.data()) {
            *g += scale * d;
        }
    }

    pub fn scale_grads(&mut self, factor: f64) {
        for grad in self.grads.values_mut() {
            grad.scale_assign(factor);
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_grads(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.grads.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar coordinates across all parameters.
    pub fn coord_count(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }
}
