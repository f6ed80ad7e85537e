//! Wall-clock timing of the inference stages.
//!
//! Every timed stage runs 3 untimed warmup iterations, then `iters` timed
//! ones; the reported figure is the median.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::pipeline::{count_flops, count_params, FlopReport, FlowLut, ParamBreakdown, Resolution, Stage};
use crate::tensor::Tensor;

pub const WARMUP_ITERS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BenchStage {
    All,
    Lut,
    Flow,
    Weights,
}

impl FromStr for BenchStage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(BenchStage::All),
            "lut" => Ok(BenchStage::Lut),
            "flow" => Ok(BenchStage::Flow),
            "weights" => Ok(BenchStage::Weights),
            _ => Err(Error::Usage(format!("unknown stage `{s}` (all, lut, flow, weights)"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BenchOptions {
    pub width: usize,
    pub height: usize,
    pub iters: usize,
    pub stage: BenchStage,
    pub seed: u64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            width: 1920,
            height: 1080,
            iters: 5,
            stage: BenchStage::All,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Timing {
    /// `weights`, `lut`, `flow` or `total`.
    pub stage: &'static str,
    pub median_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
    pub iters: usize,
    pub flops: u64,
}

#[derive(Clone, Debug)]
pub struct BenchReport {
    pub image: Resolution,
    pub processing: Option<Resolution>,
    pub timings: Vec<Timing>,
    pub params: ParamBreakdown,
    pub flops: FlopReport,
}

impl BenchReport {
    pub fn timing(&self, stage: &str) -> Option<&Timing> {
        self.timings.iter().find(|t| t.stage == stage)
    }

    /// `stage,width,height,iters,median_ms,min_ms,max_ms,flops`
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "stage,width,height,iters,median_ms,min_ms,max_ms,flops")?;
        for t in &self.timings {
            writeln!(
                out,
                "{},{},{},{},{:.4},{:.4},{:.4},{}",
                t.stage, self.image.width, self.image.height, t.iters, t.median_ms, t.min_ms, t.max_ms, t.flops
            )?;
        }
        out.flush()
    }
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "image {}x{}", self.image.width, self.image.height)?;
        match self.processing {
            Some(r) => writeln!(f, "processing resolution {}x{}", r.width, r.height)?,
            None => writeln!(f, "processing resolution native")?,
        }
        writeln!(f, "stage    median ms      min ms      max ms  iters")?;
        for t in &self.timings {
            writeln!(
                f,
                "{:<8} {:>9.3} {:>11.3} {:>11.3} {:>6}",
                t.stage, t.median_ms, t.min_ms, t.max_ms, t.iters
            )?;
        }
        writeln!(f, "{}", self.params)?;
        write!(f, "{}", self.flops)
    }
}

pub fn median(samples: &mut [f64]) -> f64 {
    assert!(!samples.is_empty());
    samples.sort_by(f64::total_cmp);
    let n = samples.len();
    if n % 2 == 1 {
        samples[n / 2]
    } else {
        0.5 * (samples[n / 2 - 1] + samples[n / 2])
    }
}

/// Warmup then `iters` timed calls of `f`.
pub fn time_stage(
    stage: &'static str,
    iters: usize,
    flops: u64,
    mut f: impl FnMut() -> Result<()>,
) -> Result<Timing> {
    for _ in 0..WARMUP_ITERS {
        f()?;
    }
    let mut ms = Vec::with_capacity(iters);
    for _ in 0..iters {
        let start = Instant::now();
        f()?;
        ms.push(start.elapsed().as_secs_f64() * 1e3);
    }
    let min_ms = ms.iter().copied().fold(f64::INFINITY, f64::min);
    let max_ms = ms.iter().copied().fold(0.0, f64::max);
    Ok(Timing {
        stage,
        median_ms: median(&mut ms),
        min_ms,
        max_ms,
        iters,
        flops,
    })
}

/// Uniform random image, reproducible per seed.
pub fn random_image(width: usize, height: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn([3, height, width], |_| rng.gen::<f32>())
}

pub fn run(model: &FlowLut, opts: &BenchOptions) -> Result<BenchReport> {
    if opts.width == 0 || opts.height == 0 {
        return Err(Error::Usage("bench dimensions must be positive".into()));
    }
    if opts.iters == 0 {
        return Err(Error::Usage("--iters must be at least 1".into()));
    }
    let image = random_image(opts.width, opts.height, opts.seed);
    let flops = count_flops(&model.config, opts.height, opts.width);
    let weights = model.fusion_weights(&image)?;
    let i_lut = model.bank.blend_apply(&weights, &image)?;

    let stages: &[BenchStage] = match opts.stage {
        BenchStage::All => &[BenchStage::Weights, BenchStage::Lut, BenchStage::Flow, BenchStage::All],
        ref s => std::slice::from_ref(s),
    };
    let mut timings = Vec::new();
    for stage in stages {
        let t = match stage {
            BenchStage::Weights => time_stage("weights", opts.iters, flops.stage_total(Stage::Weights), || {
                model.fusion_weights(&image).map(drop)
            })?,
            BenchStage::Lut => time_stage("lut", opts.iters, flops.stage_total(Stage::Lut), || {
                model.bank.blend_apply(&weights, &image).map(drop)
            })?,
            BenchStage::Flow => time_stage("flow", opts.iters, flops.stage_total(Stage::Flow), || {
                model.refine(i_lut.clone(), &image).map(drop)
            })?,
            BenchStage::All => time_stage("total", opts.iters, flops.total(), || model.enhance(&image).map(drop))?,
        };
        timings.push(t);
    }
    Ok(BenchReport {
        image: Resolution::new(opts.height, opts.width),
        processing: model.config.processing_resolution,
        timings,
        params: count_params(model),
        flops,
    })
}
