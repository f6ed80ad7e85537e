//! Parameter containers shared by the two small CNNs.

use rand::Rng;

use crate::tensor::{Backend, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer {
    /// `C_out × C_in × 3 × 3`
    pub weight: Tensor,
    pub bias: Tensor,
}

impl ConvLayer {
    /// Uniform in `±1/√fan_in` for weights and bias.
    pub fn uniform<R: Rng>(c_in: usize, c_out: usize, rng: &mut R) -> Self {
        let bound = 1.0 / ((c_in * 9) as f32).sqrt();
        Self {
            weight: Tensor::from_fn([c_out, c_in, 3, 3], |_| rng.gen_range(-bound..=bound)),
            bias: Tensor::from_fn([c_out], |_| rng.gen_range(-bound..=bound)),
        }
    }

    pub fn zeros(c_in: usize, c_out: usize) -> Self {
        Self {
            weight: Tensor::zeros([c_out, c_in, 3, 3]),
            bias: Tensor::zeros([c_out]),
        }
    }

    pub fn c_in(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn c_out(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearLayer {
    /// `out × in`
    pub weight: Tensor,
    pub bias: Tensor,
}

impl LinearLayer {
    pub fn uniform<R: Rng>(n_in: usize, n_out: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (n_in as f32).sqrt();
        Self {
            weight: Tensor::from_fn([n_out, n_in], |_| rng.gen_range(-bound..=bound)),
            bias: Tensor::from_fn([n_out], |_| rng.gen_range(-bound..=bound)),
        }
    }

    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            weight: Tensor::zeros([n_out, n_in]),
            bias: Tensor::zeros([n_out]),
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

/// Bound conv layer: `(weight, bias)` values on some backend.
pub(crate) fn conv<B: Backend>(b: &mut B, p: &[B::Value], x: &B::Value) -> crate::Result<B::Value> {
    b.conv2d(x, &p[0], &p[1])
}

pub(crate) fn linear<B: Backend>(b: &mut B, p: &[B::Value], x: &B::Value) -> crate::Result<B::Value> {
    b.linear(x, &p[0], &p[1])
}
