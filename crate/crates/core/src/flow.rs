//! Iterative residual refinement.
//!
//! Starting from the LUT output, each of `K` steps feeds the current image
//! and its residual against the original input through a three-layer CNN
//! and adds a `1/K` fraction of the predicted correction field:
//!
//! ```text
//! I⁰ = I_lut
//! Rᵏ = I_in − Iᵏ⁻¹
//! ΔFᵏ = tanh(conv(relu(conv(relu(conv([Iᵏ⁻¹, Rᵏ]))))))
//! Iᵏ = Iᵏ⁻¹ + ΔFᵏ / K
//! ```
//!
//! Intermediate images are not clamped.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{self, ConvLayer};
use crate::tensor::{Backend, Tensor};

pub const DEFAULT_HIDDEN: usize = 64;
pub const DEFAULT_FLOW_STEPS: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct FlowNetParams {
    pub conv1: ConvLayer,
    pub conv2: ConvLayer,
    pub conv3: ConvLayer,
}

impl FlowNetParams {
    /// First two layers uniform in `±1/√fan_in`; the output layer is zero so
    /// refinement starts as the identity.
    pub fn new<R: Rng>(hidden: usize, rng: &mut R) -> Self {
        Self {
            conv1: ConvLayer::uniform(6, hidden, rng),
            conv2: ConvLayer::uniform(hidden, hidden, rng),
            conv3: ConvLayer::zeros(hidden, 3),
        }
    }

    pub fn zeros(hidden: usize) -> Self {
        Self {
            conv1: ConvLayer::zeros(6, hidden),
            conv2: ConvLayer::zeros(hidden, hidden),
            conv3: ConvLayer::zeros(hidden, 3),
        }
    }

    pub fn hidden(&self) -> usize {
        self.conv1.c_out()
    }

    pub fn param_count(&self) -> usize {
        self.conv1.param_count() + self.conv2.param_count() + self.conv3.param_count()
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        [&self.conv1, &self.conv2, &self.conv3]
            .into_iter()
            .flat_map(|c| [&c.weight, &c.bias])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        [&mut self.conv1, &mut self.conv2, &mut self.conv3]
            .into_iter()
            .flat_map(|c| [&mut c.weight, &mut c.bias])
            .collect()
    }

    pub fn tensor_names() -> Vec<String> {
        (1..=3)
            .flat_map(|i| [format!("conv{i}.weight"), format!("conv{i}.bias")])
            .collect()
    }

    pub fn bind<B: Backend>(&self, b: &mut B) -> Vec<B::Value> {
        self.tensors().into_iter().map(|t| b.param(t)).collect()
    }
}

/// Closed-form parameter count: `6·h·9 + h + h·h·9 + h + h·3·9 + 3`.
pub fn param_count_for(hidden: usize) -> usize {
    (6 * hidden * 9 + hidden) + (hidden * hidden * 9 + hidden) + (hidden * 3 * 9 + 3)
}

/// Correction field for a 6×H×W input, bounded to (−1, 1).
pub fn flownet_forward<B: Backend>(b: &mut B, params: &[B::Value], x: &B::Value) -> Result<B::Value> {
    let (c, _, _) = b.value(x).chw()?;
    if c != 6 {
        return Err(Error::shape("flownet_forward", format!("expects 6 input channels, got {c}")));
    }
    let y = nn::conv(b, &params[0..2], x)?;
    let y = b.relu(y);
    let y = nn::conv(b, &params[2..4], &y)?;
    let y = b.relu(y);
    let y = nn::conv(b, &params[4..6], &y)?;
    Ok(b.tanh(y))
}

/// One refinement step as recorded in a [`RefinementTrace`].
#[derive(Clone, Debug)]
pub struct RefinementStep<V> {
    /// Root-mean-square of the residual `I_in − Iᵏ⁻¹` fed to this step.
    pub residual_rms: f64,
    pub mean_abs_flow: f64,
    /// `Iᵏ` after the update.
    pub image: V,
}

#[derive(Clone, Debug)]
pub struct RefinementTrace<V> {
    pub steps: Vec<RefinementStep<V>>,
}

/// The K-step loop with an arbitrary field predictor.
pub fn refine_with<B, F>(
    b: &mut B,
    i_lut: &B::Value,
    i_in: &B::Value,
    k_steps: usize,
    mut field: F,
) -> Result<(B::Value, RefinementTrace<B::Value>)>
where
    B: Backend,
    F: FnMut(&mut B, &B::Value) -> Result<B::Value>,
{
    if k_steps == 0 {
        return Err(Error::Usage("flow steps K must be at least 1".into()));
    }
    if b.shape_of(i_lut) != b.shape_of(i_in) {
        return Err(Error::shape(
            "refine",
            format!("{:?} vs {:?}", b.shape_of(i_lut), b.shape_of(i_in)),
        ));
    }
    let step = 1.0 / k_steps as f32;
    let mut current = i_lut.clone();
    let mut steps = Vec::with_capacity(k_steps);
    for _ in 0..k_steps {
        let residual = b.sub(i_in, &current)?;
        let x = b.concat_channels(&current, &residual)?;
        let flow = field(b, &x)?;
        let residual_rms = rms(b.value(&residual));
        let mean_abs_flow = mean_abs(b.value(&flow));
        current = b.add_scaled(&current, &flow, step)?;
        steps.push(RefinementStep {
            residual_rms,
            mean_abs_flow,
            image: current.clone(),
        });
    }
    Ok((current, RefinementTrace { steps }))
}

/// Refinement with the flow prediction network.
pub fn refine<B: Backend>(
    b: &mut B,
    params: &[B::Value],
    i_lut: &B::Value,
    i_in: &B::Value,
    k_steps: usize,
) -> Result<(B::Value, RefinementTrace<B::Value>)> {
    refine_with(b, i_lut, i_in, k_steps, |b, x| flownet_forward(b, params, x))
}

fn rms(t: &Tensor) -> f64 {
    let sum: f64 = t.data().iter().map(|&v| (v as f64) * (v as f64)).sum();
    (sum / t.len().max(1) as f64).sqrt()
}

fn mean_abs(t: &Tensor) -> f64 {
    t.data().iter().map(|&v| (v as f64).abs()).sum::<f64>() / t.len().max(1) as f64
}
