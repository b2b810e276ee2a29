//! Dense `f64` tensors and a small reverse-mode autograd tape.
//!
//! Image tensors are NCHW. Convolutions use stride 1 and, by default, "same"
//! zero padding so spatial size is preserved.

pub mod gradcheck;
pub mod io;
pub mod linalg;
pub mod ops;
pub mod tape;

use std::fmt;

use nalgebra::DMatrix;
use rand::Rng;
use thiserror::Error;

pub use gradcheck::{gradcheck, GradCheck};
pub use linalg::{spectral_norm, SpectralNorm, SpectralNormOptions};
pub use tape::{Gradients, Padding, Tape, Var};

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op}: {reason}")]
    InvalidShape { op: &'static str, reason: String },
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad tensor file: {0}")]
    Format(String),
}

#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.shape)?;
        if self.data.len() <= 16 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, TensorError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::InvalidShape {
                op: "Tensor::new",
                reason: format!("shape {shape:?} holds {expected} values, got {}", data.len()),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![],
            data: vec![value],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: (0..n).map(&mut f).collect(),
        }
    }

    /// Uniform samples in `[lo, hi)`.
    pub fn uniform<R: Rng + ?Sized>(shape: &[usize], lo: f64, hi: f64, rng: &mut R) -> Self {
        Self::from_fn(shape, |_| rng.random_range(lo..hi))
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    /// `(B, C, H, W)` of a rank-4 tensor.
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize), TensorError> {
        match self.shape[..] {
            [b, c, h, w] => Ok((b, c, h, w)),
            _ => Err(TensorError::InvalidShape {
                op: "dims4",
                reason: format!("expected rank-4 NCHW, got {:?}", self.shape),
            }),
        }
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self, TensorError> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                left: self.shape,
                right: shape,
            });
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor, TensorError> {
        if self.shape != other.shape {
            return Err(TensorError::ShapeMismatch {
                op: "zip_with",
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add_assign_scaled(&mut self, other: &Tensor, c: f64) {
        assert_eq!(self.shape, other.shape, "add_assign_scaled shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    /// Rows of a rank-2 tensor as an nalgebra matrix.
    pub fn to_matrix(&self) -> Result<DMatrix<f64>, TensorError> {
        match self.shape[..] {
            [r, c] => Ok(DMatrix::from_row_slice(r, c, &self.data)),
            _ => Err(TensorError::InvalidShape {
                op: "to_matrix",
                reason: format!("expected rank 2, got {:?}", self.shape),
            }),
        }
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Tensor {
        let (r, c) = m.shape();
        Tensor::from_fn(&[r, c], |i| m[(i / c, i % c)])
    }

    /// Concatenates rank-4 tensors along the batch axis.
    pub fn stack_batch(items: &[&Tensor]) -> Result<Tensor, TensorError> {
        let first = items.first().ok_or_else(|| TensorError::InvalidShape {
            op: "stack_batch",
            reason: "no tensors".into(),
        })?;
        let (_, c, h, w) = first.dims4()?;
        let mut data = Vec::with_capacity(items.len() * first.numel());
        let mut batch = 0;
        for t in items {
            let (b, c2, h2, w2) = t.dims4()?;
            if (c2, h2, w2) != (c, h, w) {
                return Err(TensorError::ShapeMismatch {
                    op: "stack_batch",
                    left: first.shape.clone(),
                    right: t.shape.clone(),
                });
            }
            batch += b;
            data.extend_from_slice(&t.data);
        }
        Tensor::new(vec![batch, c, h, w], data)
    }
}

/// A trainable tensor with a gradient accumulator and a stable label.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub label: String,
    pub value: Tensor,
    pub grad: Tensor,
}

impl Parameter {
    pub fn new(label: impl Into<String>, value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self {
            label: label.into(),
            value,
            grad,
        }
    }

    pub fn numel(&self) -> usize {
        self.value.numel()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn accumulate(&mut self, g: &Tensor) {
        self.grad.add_assign_scaled(g, 1.0);
    }
}

/// Xavier/Glorot uniform initialisation with the usual convolution fan
/// convention: `fan_in = shape[1]·receptive`, `fan_out = shape[0]·receptive`.
pub fn xavier_uniform<R: Rng + ?Sized>(shape: &[usize], gain: f64, rng: &mut R) -> Tensor {
    let receptive: usize = shape.iter().skip(2).product();
    let fan_in = shape.get(1).copied().unwrap_or(1) * receptive;
    let fan_out = shape.first().copied().unwrap_or(1) * receptive;
    let bound = gain * (6.0 / (fan_in + fan_out) as f64).sqrt();
    if bound == 0.0 {
        return Tensor::zeros(shape);
    }
    Tensor::uniform(shape, -bound, bound, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn shape_product_must_match() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert_eq!(Tensor::new(vec![2, 3], vec![0.0; 6]).unwrap().numel(), 6);
    }

    #[test]
    fn finiteness_check() {
        let mut t = Tensor::zeros(&[3]);
        assert!(t.all_finite());
        t.data_mut()[1] = f64::NAN;
        assert!(!t.all_finite());
    }

    #[test]
    fn xavier_bound_and_determinism() {
        let mut a = ChaCha8Rng::seed_from_u64(7);
        let mut b = ChaCha8Rng::seed_from_u64(7);
        let t = xavier_uniform(&[4, 3, 3, 3], 1.0, &mut a);
        let bound = (6.0f64 / (27.0 + 36.0)).sqrt();
        assert!(t.data().iter().all(|v| v.abs() <= bound));
        assert_eq!(t, xavier_uniform(&[4, 3, 3, 3], 1.0, &mut b));
    }

    #[test]
    fn matrix_round_trip() {
        let t = Tensor::from_fn(&[2, 3], |i| i as f64);
        let m = t.to_matrix().unwrap();
        assert_eq!(m[(1, 0)], 3.0);
        assert_eq!(Tensor::from_matrix(&m), t);
    }
}
