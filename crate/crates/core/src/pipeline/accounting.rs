//! Exact parameter counts and analytic operation counts.
//!
//! FLOPs count one multiply and one add as two operations. Counted terms:
//!
//! - 3×3 convolution: `2·C_in·C_out·9·H·W` at the layer's resolution (bias
//!   adds and activations are not counted);
//! - 2×2 max-pool: 3 comparisons per output value;
//! - global average pool: one add per input value;
//! - linear: `2·in·out`; softmax: 3 per logit;
//! - bilinear resize: 8 per output value;
//! - trilinear lookup: 64 per pixel per LUT (corner weights and the 8-corner
//!   weighted sum over 3 channels), blending: 6 per pixel per LUT;
//! - refinement update: 9 per pixel per step (residual and scaled add).

use std::fmt;

use super::config::{PipelineConfig, Resolution};
use super::model::FlowLut;
use crate::flow;
use crate::weight_net;

pub const TRILINEAR_FLOPS_PER_PIXEL: u64 = 64;
pub const BLEND_FLOPS_PER_PIXEL: u64 = 6;
pub const REFINE_UPDATE_FLOPS_PER_PIXEL: u64 = 9;
pub const RESIZE_FLOPS_PER_VALUE: u64 = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamBreakdown {
    pub luts: usize,
    pub weight_net: usize,
    pub flow_net: usize,
    pub total: usize,
}

impl ParamBreakdown {
    fn new(luts: usize, weight_net: usize, flow_net: usize) -> Self {
        Self {
            luts,
            weight_net,
            flow_net,
            total: luts + weight_net + flow_net,
        }
    }
}

impl fmt::Display for ParamBreakdown {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "params luts       {:>12}", thousands(self.luts))?;
        writeln!(f, "params weight_net {:>12}", thousands(self.weight_net))?;
        writeln!(f, "params flow_net   {:>12}", thousands(self.flow_net))?;
        write!(f, "params total      {:>12} ({:.2}M)", thousands(self.total), self.total as f64 / 1e6)
    }
}

/// `2084003` as `2,084,003`.
pub fn thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

/// Counts scalars actually stored in the model.
pub fn count_params(model: &FlowLut) -> ParamBreakdown {
    ParamBreakdown::new(
        model.bank.param_count(),
        model.weight_net.param_count(),
        model.flow_net.param_count(),
    )
}

/// Closed-form counts for a configuration.
pub fn count_params_for(config: &PipelineConfig) -> ParamBreakdown {
    let d = config.lattice_size;
    ParamBreakdown::new(
        config.num_luts * d * d * d * 3,
        weight_net::param_count_for(config.widths, config.head_hidden, config.num_luts),
        flow::param_count_for(config.flow_hidden),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Weights,
    Lut,
    Flow,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Weights => "weights",
            Stage::Lut => "lut",
            Stage::Flow => "flow",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlopEntry {
    pub stage: Stage,
    pub name: String,
    pub flops: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlopReport {
    pub image: Resolution,
    pub entries: Vec<FlopEntry>,
}

impl FlopReport {
    pub fn stage_total(&self, stage: Stage) -> u64 {
        self.entries.iter().filter(|e| e.stage == stage).map(|e| e.flops).sum()
    }

    pub fn total(&self) -> u64 {
        self.entries.iter().map(|e| e.flops).sum()
    }

    pub fn gmacs(&self) -> f64 {
        self.total() as f64 / 2e9
    }

    pub fn gflops(&self) -> f64 {
        self.total() as f64 / 1e9
    }
}

impl fmt::Display for FlopReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            writeln!(f, "{:<8} {:<28} {:>16}", e.stage.name(), e.name, e.flops)?;
        }
        for s in [Stage::Weights, Stage::Lut, Stage::Flow] {
            writeln!(f, "{:<8} {:<28} {:>16}", s.name(), "subtotal", self.stage_total(s))?;
        }
        write!(f, "total {} FLOPs = {:.3} GFLOPs = {:.3} GMACs", self.total(), self.gflops(), self.gmacs())
    }
}

/// Closed-form cost of a 3×3 convolution.
pub fn conv_flops(c_in: usize, c_out: usize, h: usize, w: usize) -> u64 {
    2 * (c_in * c_out * 9 * h * w) as u64
}

/// Per-stage analytic cost of enhancing one `h×w` image.
pub fn count_flops(config: &PipelineConfig, h: usize, w: usize) -> FlopReport {
    let mut entries = Vec::new();
    let mut push = |stage, name: String, flops| entries.push(FlopEntry { stage, name, flops });
    let px = (h * w) as u64;

    // Weight generator at the analysis resolution.
    let a = config.analysis_resolution;
    push(Stage::Weights, "resize".into(), RESIZE_FLOPS_PER_VALUE * 3 * a.pixels() as u64);
    let (mut ah, mut aw) = (a.height, a.width);
    let mut c_prev = 3;
    for (block, &c) in config.widths.iter().enumerate() {
        let b = block + 1;
        push(Stage::Weights, format!("block{b}.conv1"), conv_flops(c_prev, c, ah, aw));
        push(Stage::Weights, format!("block{b}.conv2"), conv_flops(c, c, ah, aw));
        if block < 2 {
            ah /= 2;
            aw /= 2;
            push(Stage::Weights, format!("block{b}.pool"), 3 * (c * ah * aw) as u64);
        }
        c_prev = c;
    }
    let c3 = config.widths[2];
    push(Stage::Weights, "global_pool".into(), (c3 * ah * aw) as u64);
    push(Stage::Weights, "head.hidden".into(), 2 * (c3 * config.head_hidden) as u64);
    push(Stage::Weights, "head.logits".into(), 2 * (config.head_hidden * config.num_luts) as u64);
    push(Stage::Weights, "head.softmax".into(), 3 * config.num_luts as u64);

    let n = config.num_luts as u64;
    push(Stage::Lut, "trilinear".into(), TRILINEAR_FLOPS_PER_PIXEL * n * px);
    push(Stage::Lut, "blend".into(), BLEND_FLOPS_PER_PIXEL * n * px);

    let (ph, pw) = match config.processing_resolution {
        Some(r) if (r.height, r.width) != (h, w) => {
            let pp = r.pixels() as u64;
            push(Stage::Flow, "resize.down".into(), 2 * RESIZE_FLOPS_PER_VALUE * 3 * pp);
            push(Stage::Flow, "resize.up".into(), RESIZE_FLOPS_PER_VALUE * 3 * px + 2 * 3 * px);
            (r.height, r.width)
        }
        _ => (h, w),
    };
    let k = config.flow_steps as u64;
    let hid = config.flow_hidden;
    push(Stage::Flow, "conv1".into(), k * conv_flops(6, hid, ph, pw));
    push(Stage::Flow, "conv2".into(), k * conv_flops(hid, hid, ph, pw));
    push(Stage::Flow, "conv3".into(), k * conv_flops(hid, 3, ph, pw));
    push(Stage::Flow, "update".into(), k * REFINE_UPDATE_FLOPS_PER_PIXEL * (ph * pw) as u64);

    FlopReport {
        image: Resolution::new(h, w),
        entries,
    }
}
