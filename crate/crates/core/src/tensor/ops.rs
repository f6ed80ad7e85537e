//! Shape-checked forward operators on [`Tensor`]s.
//!
//! These are the building blocks of both backends and can be called directly
//! for one-off, non-differentiable evaluation.

use super::{kernels, Activation, Tensor};
use crate::error::{Error, Result};

pub fn conv2d(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (c_in, h, wd) = x.chw()?;
    let (c_out, wc_in) = match w.shape() {
        [co, ci, 3, 3] => (*co, *ci),
        s => return Err(Error::shape("conv2d", format!("weights must be C_out×C_in×3×3, got {s:?}"))),
    };
    if wc_in != c_in {
        return Err(Error::shape(
            "conv2d",
            format!("input has {c_in} channels but weights expect {wc_in}"),
        ));
    }
    if b.shape() != [c_out] {
        return Err(Error::shape(
            "conv2d",
            format!("bias shape {:?} does not match {c_out} output channels", b.shape()),
        ));
    }
    let data = kernels::conv2d_forward(x.data(), (c_in, h, wd), w.data(), b.data(), c_out);
    Tensor::new([c_out, h, wd], data)
}

pub fn activation(mut x: Tensor, kind: Activation) -> Tensor {
    match kind {
        Activation::Relu => kernels::relu_inplace(x.data_mut()),
        Activation::Tanh => kernels::tanh_inplace(x.data_mut()),
    }
    x
}

pub fn maxpool2x2_with_argmax(x: &Tensor) -> Result<(Tensor, Vec<u32>)> {
    let (c, h, w) = x.chw()?;
    if h < 2 || w < 2 {
        return Err(Error::size("maxpool2x2", format!("needs H, W >= 2, got {h}×{w}")));
    }
    let (data, argmax) = kernels::maxpool2x2_forward(x.data(), (c, h, w));
    Ok((Tensor::new([c, h / 2, w / 2], data)?, argmax))
}

pub fn maxpool2x2(x: &Tensor) -> Result<Tensor> {
    maxpool2x2_with_argmax(x).map(|(t, _)| t)
}

pub fn global_avg_pool(x: &Tensor) -> Result<Tensor> {
    let (c, h, w) = x.chw()?;
    if h == 0 || w == 0 {
        return Err(Error::size("global_avg_pool", "empty spatial extent"));
    }
    Tensor::new([c], kernels::global_avg_pool_forward(x.data(), (c, h, w)))
}

pub fn linear(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let m = x.len();
    let n = match w.shape() {
        [n, wm] if *wm == m => *n,
        s => {
            return Err(Error::shape(
                "linear",
                format!("weights {s:?} incompatible with input of length {m}"),
            ))
        }
    };
    if b.shape() != [n] {
        return Err(Error::shape(
            "linear",
            format!("bias shape {:?} does not match {n} outputs", b.shape()),
        ));
    }
    Tensor::new([n], kernels::linear_forward(x.data(), w.data(), b.data()))
}

pub fn softmax(x: &Tensor) -> Result<Tensor> {
    if x.shape().len() != 1 || x.is_empty() {
        return Err(Error::shape("softmax", format!("expects a non-empty vector, got {:?}", x.shape())));
    }
    Tensor::new(x.shape(), kernels::softmax_forward(x.data()))
}

pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (c1, h, w) = a.chw()?;
    let (c2, h2, w2) = b.chw()?;
    if (h, w) != (h2, w2) {
        return Err(Error::shape(
            "concat_channels",
            format!("spatial extents differ: {h}×{w} vs {h2}×{w2}"),
        ));
    }
    let mut data = Vec::with_capacity(a.len() + b.len());
    data.extend_from_slice(a.data());
    data.extend_from_slice(b.data());
    Tensor::new([c1 + c2, h, w], data)
}

pub fn add_scaled(a: &Tensor, b: &Tensor, scale: f32) -> Result<Tensor> {
    same_shape("add_scaled", a, b)?;
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x + scale * y).collect();
    Tensor::new(a.shape(), data)
}

pub(crate) fn lut_extent(lut: &Tensor) -> Result<usize> {
    match lut.shape() {
        [d, d2, d3, 3] if d == d2 && d == d3 && *d >= 2 => Ok(*d),
        s => Err(Error::shape("trilinear", format!("lattice must be D×D×D×3 with D >= 2, got {s:?}"))),
    }
}

pub fn trilinear(lut: &Tensor, image: &Tensor) -> Result<Tensor> {
    let d = lut_extent(lut)?;
    let (c, h, w) = image.chw()?;
    if c != 3 {
        return Err(Error::shape("trilinear", format!("image must have 3 channels, got {c}")));
    }
    Tensor::new([3, h, w], kernels::trilinear_forward(lut.data(), d, image.data(), h * w))
}

pub fn weighted_sum(items: &[&Tensor], weights: &Tensor) -> Result<Tensor> {
    if weights.shape() != [items.len()] {
        return Err(Error::shape(
            "weighted_sum",
            format!("{} items but weight shape {:?}", items.len(), weights.shape()),
        ));
    }
    let first = items
        .first()
        .ok_or_else(|| Error::shape("weighted_sum", "no items"))?;
    for item in items {
        same_shape("weighted_sum", first, item)?;
    }
    let mut acc = vec![0.0f32; first.len()];
    for (item, &wt) in items.iter().zip(weights.data()) {
        for (a, &v) in acc.iter_mut().zip(item.data()) {
            *a += wt * v;
        }
    }
    Tensor::new(first.shape(), acc)
}

pub fn resize_bilinear(x: &Tensor, oh: usize, ow: usize) -> Result<Tensor> {
    let (c, h, w) = x.chw()?;
    if h == 0 || w == 0 || oh == 0 || ow == 0 {
        return Err(Error::size("resize_bilinear", format!("{h}×{w} -> {oh}×{ow}")));
    }
    Tensor::new([c, oh, ow], kernels::resize_bilinear_forward(x.data(), (c, h, w), (oh, ow)))
}

pub fn clamp01(mut x: Tensor) -> Tensor {
    for v in x.data_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    x
}

/// Mean squared error in `f64`: `(1/N)·Σ(out − gt)²`.
pub fn mse_f64(out: &Tensor, gt: &Tensor) -> Result<f64> {
    same_shape("mse", out, gt)?;
    if out.is_empty() {
        return Err(Error::size("mse", "empty tensors"));
    }
    Ok(kernels::squared_error_sum(out.data(), gt.data()) / out.len() as f64)
}

pub fn mse(out: &Tensor, gt: &Tensor) -> Result<Tensor> {
    Ok(Tensor::scalar(mse_f64(out, gt)? as f32))
}

pub(crate) fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}
