//! Flat row-major tensors holding parameters and activations.

use std::sync::Arc;

use crate::error::{Error, Result};

/// An n-dimensional float32 array. The data buffer is shared (`Arc`) so that
/// tape leaves can reference parameters without copying; mutation goes
/// through [`Tensor::data_mut`], which is only legal between training steps.
#[derive(Debug, Clone)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Arc<Vec<f32>>,
    pub requires_grad: bool,
    pub grad: Option<Vec<f32>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::Shape(format!("zero dimension in shape {shape:?}")));
        }
        if data.len() != numel {
            return Err(Error::Shape(format!(
                "data length {} does not match shape {:?} (numel {})",
                data.len(),
                shape,
                numel
            )));
        }
        Ok(Tensor { shape, data: Arc::new(data), requires_grad: false, grad: None })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel: usize = shape.iter().product();
        Tensor { shape, data: Arc::new(vec![0.0; numel]), requires_grad: false, grad: None }
    }

    pub fn scalar(v: f32) -> Self {
        Tensor { shape: vec![1], data: Arc::new(vec![v]), requires_grad: false, grad: None }
    }

    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub(crate) fn data_arc(&self) -> Arc<Vec<f32>> {
        Arc::clone(&self.data)
    }

    /// Mutable access to the buffer; clones if a tape still shares it.
    pub fn data_mut(&mut self) -> &mut Vec<f32> {
        Arc::make_mut(&mut self.data)
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = &mut self.grad {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Gradient buffer, allocating zeros on first use.
    pub fn grad_mut(&mut self) -> &mut Vec<f32> {
        let n = self.numel();
        self.grad.get_or_insert_with(|| vec![0.0; n])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_mismatch_rejected() {
        assert!(matches!(Tensor::new(vec![2, 3], vec![0.0; 5]), Err(Error::Shape(_))));
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
    }

    #[test]
    fn grad_buffer_matches_shape() {
        let mut t = Tensor::zeros(vec![3, 2]);
        assert_eq!(t.grad_mut().len(), 6);
    }
}
