//! Named parameter collection with stable iteration order.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::tape::{Tape, Var};
use crate::autograd::tensor::Tensor;
use crate::error::{Error, Result};

/// Parameters in registration order; the order defines both checkpoint
/// layout and the leaf binding order on tapes.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: Vec<(String, Tensor)>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor) -> Result<()> {
        if self.entries.iter().any(|(n, _)| n == name) {
            return Err(Error::Contract(format!("duplicate parameter name '{name}'")));
        }
        self.entries.push((name.to_string(), tensor.with_grad()));
        Ok(())
    }

    /// He-style uniform init: U(-sqrt(6/fan_in), +sqrt(6/fan_in)).
    pub fn insert_he_uniform(
        &mut self,
        name: &str,
        shape: Vec<usize>,
        fan_in: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<()> {
        let limit = (6.0 / fan_in.max(1) as f64).sqrt();
        let numel: usize = shape.iter().product();
        let data: Vec<f32> = (0..numel).map(|_| rng.gen_range(-limit..limit) as f32).collect();
        self.insert(name, Tensor::new(shape, data)?)
    }

    pub fn insert_zeros(&mut self, name: &str, shape: Vec<usize>) -> Result<()> {
        self.insert(name, Tensor::zeros(shape))
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
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

    pub fn zero_grads(&mut self) {
        for (_, t) in self.entries.iter_mut() {
            t.zero_grad();
        }
    }

    /// Bind every parameter as a tape leaf, in store order.
    /// `trainable` controls whether gradients flow into the leaves.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        self.entries
            .iter()
            .map(|(_, t)| {
                if trainable {
                    tape.leaf(t)
                } else {
                    let mut frozen = t.clone();
                    frozen.requires_grad = false;
                    tape.leaf(&frozen)
                }
            })
            .collect()
    }

    /// Pull gradients off a tape into the store (overwriting, not adding).
    /// `leaves` must come from [`ParamStore::bind`] on that tape. The tape's
    /// f64 accumulators are cast to the f32 gradient buffers here.
    pub fn set_grads_from_tape(&mut self, tape: &Tape, leaves: &[Var]) -> Result<()> {
        if leaves.len() != self.entries.len() {
            return Err(Error::Contract("leaf count does not match parameter count".into()));
        }
        for ((_, t), &v) in self.entries.iter_mut().zip(leaves) {
            let buf = t.grad_mut();
            match tape.grad(v) {
                Some(g) => {
                    for (b, &gv) in buf.iter_mut().zip(g) {
                        *b = gv as f32;
                    }
                }
                None => buf.iter_mut().for_each(|x| *x = 0.0),
            }
        }
        Ok(())
    }

    /// Byte-exact equality of parameter values (shapes and bits).
    pub fn bits_equal(&self, other: &ParamStore) -> bool {
        self.entries.len() == other.entries.len()
            && self.entries.iter().zip(&other.entries).all(|((na, ta), (nb, tb))| {
                na == nb
                    && ta.shape() == tb.shape()
                    && ta.data().iter().zip(tb.data()).all(|(a, b)| a.to_bits() == b.to_bits())
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, streams};

    #[test]
    fn duplicate_names_rejected() {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::zeros(vec![2])).unwrap();
        assert!(s.insert("w", Tensor::zeros(vec![2])).is_err());
    }

    #[test]
    fn he_init_is_seed_deterministic() {
        let mut a = ParamStore::new();
        let mut b = ParamStore::new();
        a.insert_he_uniform("w", vec![4, 3], 4, &mut stream(9, &[streams::INIT])).unwrap();
        b.insert_he_uniform("w", vec![4, 3], 4, &mut stream(9, &[streams::INIT])).unwrap();
        assert!(a.bits_equal(&b));
    }
}
