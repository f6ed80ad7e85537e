//! Content-aware fusion-weight generator.
//!
//! Three conv blocks (two 3×3 conv + ReLU each, 2×2 max-pool after the first
//! two), global average pooling of the last block's un-pooled features, then
//! `Linear → ReLU → Linear → softmax` producing one weight per LUT.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{self, ConvLayer, LinearLayer};
use crate::tensor::{Backend, Tensor};

pub const DEFAULT_WIDTHS: [usize; 3] = [64, 128, 256];
pub const DEFAULT_HEAD_HIDDEN: usize = 128;
/// Smallest accepted input side: two pooling stages must leave at least 2×2.
pub const MIN_INPUT_SIDE: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct WeightGeneratorParams {
    /// Six conv layers: block k holds layers `2k` and `2k + 1`.
    pub convs: Vec<ConvLayer>,
    pub hidden: LinearLayer,
    pub logits: LinearLayer,
}

impl WeightGeneratorParams {
    /// Conv and hidden layers uniform in `±1/√fan_in`; the logit layer starts
    /// at zero so the initial blend is uniform.
    pub fn new<R: Rng>(widths: [usize; 3], head_hidden: usize, num_luts: usize, rng: &mut R) -> Self {
        let mut convs = Vec::with_capacity(6);
        let mut c_prev = 3;
        for &c in &widths {
            convs.push(ConvLayer::uniform(c_prev, c, rng));
            convs.push(ConvLayer::uniform(c, c, rng));
            c_prev = c;
        }
        Self {
            convs,
            hidden: LinearLayer::uniform(widths[2], head_hidden, rng),
            logits: LinearLayer::zeros(head_hidden, num_luts),
        }
    }

    pub fn zeros(widths: [usize; 3], head_hidden: usize, num_luts: usize) -> Self {
        let mut convs = Vec::with_capacity(6);
        let mut c_prev = 3;
        for &c in &widths {
            convs.push(ConvLayer::zeros(c_prev, c));
            convs.push(ConvLayer::zeros(c, c));
            c_prev = c;
        }
        Self {
            convs,
            hidden: LinearLayer::zeros(widths[2], head_hidden),
            logits: LinearLayer::zeros(head_hidden, num_luts),
        }
    }

    pub fn widths(&self) -> [usize; 3] {
        [self.convs[1].c_out(), self.convs[3].c_out(), self.convs[5].c_out()]
    }

    pub fn num_outputs(&self) -> usize {
        self.logits.bias.len()
    }

    pub fn param_count(&self) -> usize {
        self.convs.iter().map(ConvLayer::param_count).sum::<usize>()
            + self.hidden.param_count()
            + self.logits.param_count()
    }

    /// Parameter tensors in binding order.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> = self.convs.iter().flat_map(|c| [&c.weight, &c.bias]).collect();
        out.extend([&self.hidden.weight, &self.hidden.bias, &self.logits.weight, &self.logits.bias]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = self
            .convs
            .iter_mut()
            .flat_map(|c| [&mut c.weight, &mut c.bias])
            .collect();
        out.extend([
            &mut self.hidden.weight,
            &mut self.hidden.bias,
            &mut self.logits.weight,
            &mut self.logits.bias,
        ]);
        out
    }

    pub fn tensor_names() -> Vec<String> {
        let mut names: Vec<String> = (0..6)
            .flat_map(|i| {
                let (block, layer) = (i / 2 + 1, i % 2 + 1);
                [format!("block{block}.conv{layer}.weight"), format!("block{block}.conv{layer}.bias")]
            })
            .collect();
        names.extend(["head.hidden.weight", "head.hidden.bias", "head.logits.weight", "head.logits.bias"].map(String::from));
        names
    }

    pub fn bind<B: Backend>(&self, b: &mut B) -> Vec<B::Value> {
        self.tensors().into_iter().map(|t| b.param(t)).collect()
    }
}

/// Closed-form parameter count for the given widths.
pub fn param_count_for(widths: [usize; 3], head_hidden: usize, num_luts: usize) -> usize {
    let conv = |ci: usize, co: usize| co * ci * 9 + co;
    let mut total = 0;
    let mut c_prev = 3;
    for &c in &widths {
        total += conv(c_prev, c) + conv(c, c);
        c_prev = c;
    }
    total + widths[2] * head_hidden + head_hidden + head_hidden * num_luts + num_luts
}

/// Backbone up to the third block's pre-pool features `F'_3`.
pub fn backbone<B: Backend>(b: &mut B, params: &[B::Value], image: &B::Value) -> Result<B::Value> {
    let (c, h, w) = b.value(image).chw()?;
    if c != 3 {
        return Err(Error::shape("weightgen_forward", format!("expects 3 channels, got {c}")));
    }
    if h < MIN_INPUT_SIDE || w < MIN_INPUT_SIDE {
        return Err(Error::size(
            "weightgen_forward",
            format!("input must be at least {MIN_INPUT_SIDE}×{MIN_INPUT_SIDE}, got {h}×{w}"),
        ));
    }
    let mut x = image.clone();
    for block in 0..3 {
        let p = &params[block * 4..block * 4 + 4];
        let y = nn::conv(b, &p[0..2], &x)?;
        let y = b.relu(y);
        let y = nn::conv(b, &p[2..4], &y)?;
        x = b.relu(y);
        if block < 2 {
            x = b.maxpool2x2(&x)?;
        }
    }
    Ok(x)
}

/// Global pooling and the softmax head applied to backbone features.
pub fn head<B: Backend>(b: &mut B, params: &[B::Value], features: &B::Value) -> Result<B::Value> {
    let pooled = b.global_avg_pool(features)?;
    let hidden = nn::linear(b, &params[12..14], &pooled)?;
    let hidden = b.relu(hidden);
    let logits = nn::linear(b, &params[14..16], &hidden)?;
    b.softmax(&logits)
}

/// Fusion weights for an image already resized to the analysis resolution.
pub fn weightgen_forward<B: Backend>(b: &mut B, params: &[B::Value], image: &B::Value) -> Result<B::Value> {
    let features = backbone(b, params, image)?;
    head(b, params, &features)
}
