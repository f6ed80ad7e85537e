//! Dense `f32` tensors with a small reverse-mode autodiff engine.
//!
//! Storage is always row-major `f32`. Reductions (convolution dot products,
//! pooling means, softmax normalizers, loss sums) accumulate in `f64`.
//!
//! Model code is written once against the [`Backend`] trait and runs on two
//! backends:
//!
//! - [`Graph`] records every operation so that [`Graph::backward`] can
//!   propagate gradients to the leaves.
//! - [`Eager`] evaluates immediately and keeps nothing alive beyond what the
//!   caller holds, which is what inference on large images needs.

mod eager;
mod graph;
pub mod kernels;
pub mod ops;

pub use eager::Eager;
pub use graph::{Gradients, Graph, Var};

use crate::error::{Error, Result};

/// Dense row-major `f32` array.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<f32>) -> Result<Self> {
        let shape = shape.into();
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::shape(
                "tensor",
                format!(
                    "shape {:?} needs {} elements, got {}",
                    shape,
                    expected,
                    data.len()
                ),
            ));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: f32) -> Self {
        let shape = shape.into();
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![value; n],
        }
    }

    pub fn scalar(value: f32) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn from_fn(shape: impl Into<Vec<usize>>, mut f: impl FnMut(usize) -> f32) -> Self {
        let shape = shape.into();
        let n: usize = shape.iter().product();
        Self {
            shape,
            data: (0..n).map(&mut f).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> f32 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    /// Interprets the tensor as channels × height × width.
    pub fn chw(&self) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [c, h, w] => Ok((c, h, w)),
            _ => Err(Error::shape(
                "chw",
                format!("expected a C×H×W tensor, got shape {:?}", self.shape),
            )),
        }
    }

    pub fn reshape(mut self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        let shape = shape.into();
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::shape(
                "reshape",
                format!("{:?} -> {:?}", self.shape, shape),
            ));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f32 {
        assert_eq!(self.shape, other.shape, "max_abs_diff on mismatched shapes");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Single channel plane of a C×H×W tensor.
    pub fn channel(&self, c: usize) -> &[f32] {
        let (_, h, w) = self.chw().expect("channel() on a non-C×H×W tensor");
        &self.data[c * h * w..(c + 1) * h * w]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

/// Operator set shared by the recording and the eager backends.
///
/// Unary elementwise ops take their operand by value so that the eager
/// backend can reuse the buffer when nothing else holds it.
pub trait Backend {
    type Value: Clone;

    /// A value that never receives gradients.
    fn constant(&mut self, t: Tensor) -> Self::Value;
    /// A trainable leaf.
    fn param(&mut self, t: &Tensor) -> Self::Value;
    fn value<'a>(&'a self, v: &'a Self::Value) -> &'a Tensor;

    fn conv2d(
        &mut self,
        x: &Self::Value,
        w: &Self::Value,
        b: &Self::Value,
    ) -> Result<Self::Value>;
    fn activation(&mut self, x: Self::Value, kind: Activation) -> Self::Value;
    fn maxpool2x2(&mut self, x: &Self::Value) -> Result<Self::Value>;
    fn global_avg_pool(&mut self, x: &Self::Value) -> Result<Self::Value>;
    fn linear(
        &mut self,
        x: &Self::Value,
        w: &Self::Value,
        b: &Self::Value,
    ) -> Result<Self::Value>;
    fn softmax(&mut self, x: &Self::Value) -> Result<Self::Value>;
    fn concat_channels(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    /// `a + scale · b`, elementwise.
    fn add_scaled(&mut self, a: &Self::Value, b: &Self::Value, scale: f32)
        -> Result<Self::Value>;
    /// Applies a D×D×D×3 lattice to a 3×H×W image.
    fn trilinear(&mut self, lut: &Self::Value, image: &Self::Value) -> Result<Self::Value>;
    /// `Σ_i weights[i] · items[i]` for equally shaped items.
    fn weighted_sum(&mut self, items: &[Self::Value], weights: &Self::Value)
        -> Result<Self::Value>;
    fn resize_bilinear(&mut self, x: &Self::Value, h: usize, w: usize) -> Result<Self::Value>;
    fn clamp01(&mut self, x: Self::Value) -> Self::Value;
    /// Mean squared error, a one-element tensor.
    fn mse(&mut self, out: &Self::Value, gt: &Self::Value) -> Result<Self::Value>;

    fn relu(&mut self, x: Self::Value) -> Self::Value {
        self.activation(x, Activation::Relu)
    }

    fn tanh(&mut self, x: Self::Value) -> Self::Value {
        self.activation(x, Activation::Tanh)
    }

    fn sub(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value> {
        self.add_scaled(a, b, -1.0)
    }

    fn shape_of(&self, v: &Self::Value) -> Vec<usize> {
        self.value(v).shape().to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_checks_element_count() {
        assert!(Tensor::new([2, 3], vec![0.0; 6]).is_ok());
        assert!(matches!(
            Tensor::new([2, 3], vec![0.0; 5]),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn chw_rejects_other_ranks() {
        assert_eq!(Tensor::zeros([3, 2, 4]).chw().unwrap(), (3, 2, 4));
        assert!(Tensor::zeros([3, 2]).chw().is_err());
    }
}
