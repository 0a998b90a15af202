//! Dense row-major tensors.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense rank-N array, row-major, with every sanctioned operation keeping all
/// entries finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F: Scalar> {
    shape: Vec<usize>,
    data: Vec<F>,
}

impl<F: Scalar> Tensor<F> {
    pub fn new(shape: Vec<usize>, data: Vec<F>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::RejectedInput(format!(
                "shape {:?} implies {} elements, got {}",
                shape,
                expected,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite tensor entry".into()));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        Self { shape, data: vec![F::zero(); n] }
    }

    pub fn full(shape: Vec<usize>, value: F) -> Self {
        let n: usize = shape.iter().product();
        Self { shape, data: vec![value; n] }
    }

    /// Single-channel image tensor with shape `[1, height, width]`.
    pub fn image(height: usize, width: usize, data: Vec<F>) -> Result<Self> {
        Self::new(vec![1, height, width], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<F> {
        self.data
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.shape == other.shape
    }

    pub fn l2_norm(&self) -> F {
        self.data.iter().map(|v| *v * *v).sum::<F>().sqrt()
    }

    pub fn scaled(&self, k: F) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| *v * k).collect(),
        }
    }

    /// `self + k * other`, shapes must agree.
    pub fn add_scaled(&self, other: &Self, k: F) -> Result<Self> {
        if !self.same_shape(other) {
            return Err(Error::RejectedInput(format!(
                "shape mismatch: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| *a + k * *b)
            .collect();
        Ok(Self { shape: self.shape.clone(), data })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add_scaled(other, -F::one())
    }

    pub fn max_abs_diff(&self, other: &Self) -> F {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a - *b).abs())
            .fold(F::zero(), F::max)
    }

    pub fn clamp01(&mut self) {
        for v in &mut self.data {
            *v = v.max(F::zero()).min(F::one());
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
