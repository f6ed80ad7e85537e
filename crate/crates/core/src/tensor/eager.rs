use std::rc::Rc;

use super::{ops, Activation, Backend, Tensor};
use crate::error::Result;

/// Immediate-mode backend: values are reference-counted tensors and
/// intermediates are freed as soon as the caller drops them.
#[derive(Debug, Default)]
pub struct Eager;

impl Eager {
    pub fn new() -> Self {
        Self
    }

    /// Recovers the tensor, copying only if another handle still shares it.
    pub fn into_tensor(v: Rc<Tensor>) -> Tensor {
        Rc::try_unwrap(v).unwrap_or_else(|shared| (*shared).clone())
    }
}

impl Backend for Eager {
    type Value = Rc<Tensor>;

    fn constant(&mut self, t: Tensor) -> Rc<Tensor> {
        Rc::new(t)
    }

    fn param(&mut self, t: &Tensor) -> Rc<Tensor> {
        Rc::new(t.clone())
    }

    fn value<'a>(&'a self, v: &'a Rc<Tensor>) -> &'a Tensor {
        v
    }

    fn conv2d(&mut self, x: &Rc<Tensor>, w: &Rc<Tensor>, b: &Rc<Tensor>) -> Result<Rc<Tensor>> {
        ops::conv2d(x, w, b).map(Rc::new)
    }

    fn activation(&mut self, x: Rc<Tensor>, kind: Activation) -> Rc<Tensor> {
        Rc::new(ops::activation(Self::into_tensor(x), kind))
    }

    fn maxpool2x2(&mut self, x: &Rc<Tensor>) -> Result<Rc<Tensor>> {
        ops::maxpool2x2(x).map(Rc::new)
    }

    fn global_avg_pool(&mut self, x: &Rc<Tensor>) -> Result<Rc<Tensor>> {
        ops::global_avg_pool(x).map(Rc::new)
    }

    fn linear(&mut self, x: &Rc<Tensor>, w: &Rc<Tensor>, b: &Rc<Tensor>) -> Result<Rc<Tensor>> {
        ops::linear(x, w, b).map(Rc::new)
    }

    fn softmax(&mut self, x: &Rc<Tensor>) -> Result<Rc<Tensor>> {
        ops::softmax(x).map(Rc::new)
    }

    fn concat_channels(&mut self, a: &Rc<Tensor>, b: &Rc<Tensor>) -> Result<Rc<Tensor>> {
        ops::concat_channels(a, b).map(Rc::new)
    }

    fn add_scaled(&mut self, a: &Rc<Tensor>, b: &Rc<Tensor>, scale: f32) -> Result<Rc<Tensor>> {
        ops::add_scaled(a, b, scale).map(Rc::new)
    }

    fn trilinear(&mut self, lut: &Rc<Tensor>, image: &Rc<Tensor>) -> Result<Rc<Tensor>> {
        ops::trilinear(lut, image).map(Rc::new)
    }

    fn weighted_sum(&mut self, items: &[Rc<Tensor>], weights: &Rc<Tensor>) -> Result<Rc<Tensor>> {
        let refs: Vec<&Tensor> = items.iter().map(|t| t.as_ref()).collect();
        ops::weighted_sum(&refs, weights).map(Rc::new)
    }

    fn resize_bilinear(&mut self, x: &Rc<Tensor>, h: usize, w: usize) -> Result<Rc<Tensor>> {
        ops::resize_bilinear(x, h, w).map(Rc::new)
    }

    fn clamp01(&mut self, x: Rc<Tensor>) -> Rc<Tensor> {
        Rc::new(ops::clamp01(Self::into_tensor(x)))
    }

    fn mse(&mut self, out: &Rc<Tensor>, gt: &Rc<Tensor>) -> Result<Rc<Tensor>> {
        ops::mse(out, gt).map(Rc::new)
    }
}
