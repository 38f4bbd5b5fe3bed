//! Learnable tensors with paired gradient and optimizer-moment buffers.

use rand::Rng as _;

use super::rng::labeled_rng;
use crate::error::{Error, Result};

/// Default half-width of the uniform initializer.
pub const INIT_SCALE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    /// Frozen tensors are skipped by the optimizer and never accumulate gradient.
    pub frozen: bool,
}

impl ParamTensor {
    pub fn from_values(name: impl Into<String>, shape: Vec<usize>, value: Vec<f64>) -> Self {
        let n = value.len();
        debug_assert_eq!(n, shape.iter().product::<usize>());
        Self {
            name: name.into(),
            shape,
            value,
            grad: vec![0.0; n],
            m: vec![0.0; n],
            v: vec![0.0; n],
            frozen: false,
        }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// How a new tensor's values are filled.
#[derive(Debug, Clone, Copy)]
pub enum Init {
    /// Uniform in `[-scale, scale]` from a stream keyed by (seed, tensor name).
    Uniform {
        seed: u64,
        scale: f64,
    },
    Constant(f64),
}

/// Named collection of every learnable tensor of a model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    tensors: Vec<ParamTensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, shape: &[usize], init: Init) -> Result<ParamId> {
        if self.find(name).is_some() {
            return Err(Error::config(name, "duplicate parameter name"));
        }
        let n: usize = shape.iter().product();
        let value = match init {
            Init::Uniform { seed, scale } => {
                let mut rng = labeled_rng(seed, &format!("init/{name}"));
                (0..n).map(|_| rng.random_range(-scale..=scale)).collect()
            }
            Init::Constant(c) => vec![c; n],
        };
        self.tensors.push(ParamTensor::from_values(name, shape.to_vec(), value));
        Ok(ParamId(self.tensors.len() - 1))
    }

    pub fn push(&mut self, tensor: ParamTensor) -> Result<ParamId> {
        if self.find(&tensor.name).is_some() {
            return Err(Error::config(&tensor.name, "duplicate parameter name"));
        }
        self.tensors.push(tensor);
        Ok(ParamId(self.tensors.len() - 1))
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.tensors.iter().position(|t| t.name == name).map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &ParamTensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut ParamTensor {
        &mut self.tensors[id.0]
    }

    pub fn value(&self, id: ParamId) -> &[f64] {
        &self.tensors[id.0].value
    }

    pub fn by_name(&self, name: &str) -> Option<&ParamTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn tensors(&self) -> &[ParamTensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [ParamTensor] {
        &mut self.tensors
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(ParamTensor::len).sum()
    }

    pub fn zero_grads(&mut self) {
        self.tensors.iter_mut().for_each(ParamTensor::zero_grad);
    }

    pub fn set_frozen(&mut self, id: ParamId, frozen: bool) {
        self.tensors[id.0].frozen = frozen;
    }

    /// Read-only view of every tensor's values.
    pub fn values(&self) -> Values<'_> {
        Values(self.tensors.iter().map(|t| t.value.as_slice()).collect())
    }

    /// Split into read-only values and writable gradient buffers so a backward
    /// pass can read weights while accumulating into any tensor's gradient.
    pub fn split_mut(&mut self) -> (Values<'_>, Grads<'_>) {
        let mut values = Vec::with_capacity(self.tensors.len());
        let mut grads = Vec::with_capacity(self.tensors.len());
        for t in self.tensors.iter_mut() {
            let ParamTensor {
                value, grad, frozen, ..
            } = t;
            values.push(value.as_slice());
            grads.push((grad.as_mut_slice(), *frozen));
        }
        (Values(values), Grads(grads))
    }

    /// Check that `other` has the same tensor names and shapes.
    pub fn check_compatible(&self, other: &ParamStore) -> Result<()> {
        for t in &self.tensors {
            let Some(o) = other.by_name(&t.name) else {
                return Err(Error::Checkpoint(format!("missing tensor `{}`", t.name)));
            };
            if o.shape != t.shape {
                return Err(Error::ShapeMismatch {
                    name: t.name.clone(),
                    expected: t.shape.clone(),
                    found: o.shape.clone(),
                });
            }
        }
        if let Some(extra) = other.tensors.iter().find(|o| self.find(&o.name).is_none()) {
            return Err(Error::Checkpoint(format!("unexpected tensor `{}`", extra.name)));
        }
        Ok(())
    }

    /// Copy values and optimizer state from `other`, matched by name.
    pub fn load_from(&mut self, other: &ParamStore) -> Result<()> {
        self.check_compatible(other)?;
        for t in self.tensors.iter_mut() {
            let o = other.by_name(&t.name).expect("checked above");
            t.value.clone_from(&o.value);
            t.m.clone_from(&o.m);
            t.v.clone_from(&o.v);
            t.zero_grad();
        }
        Ok(())
    }
}

pub struct Values<'a>(Vec<&'a [f64]>);

impl<'a> Values<'a> {
    #[inline]
    pub fn get(&self, id: ParamId) -> &'a [f64] {
        self.0[id.0]
    }
}

pub struct Grads<'a>(Vec<(&'a mut [f64], bool)>);

impl Grads<'_> {
    /// Gradient buffer of `id`, or `None` when the tensor is frozen.
    #[inline]
    pub fn get(&mut self, id: ParamId) -> Option<&mut [f64]> {
        let (g, frozen) = &mut self.0[id.0];
        if *frozen {
            None
        } else {
            Some(&mut **g)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_keyed_by_name_not_order() {
        let mut a = ParamStore::new();
        a.add("x", &[3, 2], Init::Uniform { seed: 1, scale: 0.1 }).unwrap();
        a.add("y", &[4], Init::Uniform { seed: 1, scale: 0.1 }).unwrap();
        let mut b = ParamStore::new();
        b.add("y", &[4], Init::Uniform { seed: 1, scale: 0.1 }).unwrap();
        assert_eq!(a.by_name("y").unwrap().value, b.by_name("y").unwrap().value);
        assert!(a.by_name("x").unwrap().value.iter().all(|v| v.abs() <= 0.1));
    }

    #[test]
    fn frozen_tensors_expose_no_gradient() {
        let mut s = ParamStore::new();
        let id = s.add("bw", &[2], Init::Constant(0.5)).unwrap();
        s.set_frozen(id, true);
        let (_, mut grads) = s.split_mut();
        assert!(grads.get(id).is_none());
    }

    #[test]
    fn compatibility_names_offending_tensor() {
        let mut a = ParamStore::new();
        a.add("w", &[2, 2], Init::Constant(0.0)).unwrap();
        let mut b = ParamStore::new();
        b.add("w", &[2, 3], Init::Constant(0.0)).unwrap();
        match a.check_compatible(&b) {
            Err(Error::ShapeMismatch { name, expected, .. }) => {
                assert_eq!(name, "w");
                assert_eq!(expected, vec![2, 2]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
