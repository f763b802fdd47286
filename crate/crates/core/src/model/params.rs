use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Element, NdArray, Tensor};

/// Named model weights in registration order.
#[derive(Debug, Clone)]
pub struct ParamStore<E: Element> {
    names: Vec<String>,
    values: Vec<Arc<NdArray<E>>>,
}

impl<E: Element> Default for ParamStore<E> {
    fn default() -> Self {
        Self { names: Vec::new(), values: Vec::new() }
    }
}

impl<E: Element> ParamStore<E> {
    pub fn register(&mut self, name: impl Into<String>, value: NdArray<E>) -> usize {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.values.push(Arc::new(value));
        self.names.len() - 1
    }

    /// Uniform `±sqrt(6 / fan_in)` initialization.
    pub fn register_fan_in_uniform<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        fan_in: usize,
        rng: &mut R,
    ) -> usize {
        let bound = (6.0 / fan_in as f64).sqrt();
        let len = shape.iter().product();
        let data = (0..len).map(|_| E::from_f64_lossy(rng.random_range(-bound..bound))).collect();
        self.register(name, NdArray::from_vec(shape.to_vec(), data).expect("shape matches"))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn value(&self, id: usize) -> &NdArray<E> {
        &self.values[id]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &NdArray<E>)> {
        self.names.iter().map(String::as_str).zip(self.values.iter().map(|v| &**v))
    }

    /// Mutable access for optimizers; copies only if a graph still holds the
    /// buffer.
    pub fn value_mut(&mut self, id: usize) -> &mut NdArray<E> {
        Arc::make_mut(&mut self.values[id])
    }

    pub fn set(&mut self, id: usize, value: NdArray<E>) -> Result<()> {
        if value.shape() != self.values[id].shape() {
            return Err(Error::shape(
                "ParamStore::set",
                format!("{}: {:?} vs {:?}", self.names[id], value.shape(), self.values[id].shape()),
            ));
        }
        self.values[id] = Arc::new(value);
        Ok(())
    }

    /// Total number of scalar weights.
    pub fn count(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    /// Wraps every parameter in a graph leaf sharing its buffer.
    pub fn bind(&self, requires_grad: bool) -> Vec<Tensor<E>> {
        self.values.iter().map(|v| Tensor::from_shared(Arc::clone(v), requires_grad)).collect()
    }

    pub fn cast<F: Element>(&self) -> ParamStore<F> {
        ParamStore {
            names: self.names.clone(),
            values: self.values.iter().map(|v| Arc::new(v.cast())).collect(),
        }
    }
}
