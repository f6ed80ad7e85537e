//! Finite-difference verification of the analytic gradients.
//!
//! Each group builds small random instances, differentiates a scalar loss
//! with [`Graph::backward`], and compares every checked coordinate with a
//! central difference of the same loss evaluated by the `f64` loops in
//! [`reference`]. A coordinate whose `±h` evaluations take different
//! branches (ReLU sign, max-pool winner, trilinear cell, clamp) sits on a
//! kink and is skipped.
//!
//! The error measure is `|a − n| / max(|a|, |n|, floor)`: relative for
//! ordinary gradients, absolute below `floor`, where `f32` rounding in the
//! analytic pass dominates.

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::flow::{self, FlowNetParams};
use crate::lut;
use crate::pipeline::{total_loss, FlowLut, PipelineConfig, Resolution};
use crate::reference::{self as r, Field, Kinks};
use crate::tensor::{Backend, Graph, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Group {
    Conv2d,
    Linear,
    Pooling,
    SoftmaxBlend,
    Trilinear,
    RefineK1,
    RefineK4,
    EndToEnd,
}

impl Group {
    pub const ALL: [Group; 8] = [
        Group::Conv2d,
        Group::Linear,
        Group::Pooling,
        Group::SoftmaxBlend,
        Group::Trilinear,
        Group::RefineK1,
        Group::RefineK4,
        Group::EndToEnd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Group::Conv2d => "conv2d",
            Group::Linear => "linear",
            Group::Pooling => "pooling",
            Group::SoftmaxBlend => "softmax_blend",
            Group::Trilinear => "trilinear",
            Group::RefineK1 => "refine_k1",
            Group::RefineK4 => "refine_k4",
            Group::EndToEnd => "end_to_end",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|g| g.name() == s)
    }
}

#[derive(Clone, Debug)]
pub struct Options {
    pub seed: u64,
    /// Random instances per group.
    pub seeds: usize,
    pub tolerance: f64,
    /// Finite-difference step.
    pub step: f64,
    /// Denominator floor of the error measure.
    pub floor: f64,
    pub groups: Vec<Group>,
    /// Test hook: scales the analytic gradients of this group by 1.01.
    pub corrupt: Option<Group>,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            seed: 0,
            seeds: 20,
            tolerance: 1e-3,
            step: 1e-3,
            floor: 1e-5,
            groups: Group::ALL.to_vec(),
            corrupt: None,
        }
    }
}

/// One compared coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub seed: u64,
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub error: f64,
}

impl fmt::Display for Sample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "seed {} {}[{}]: analytic {:.9e} numeric {:.9e} error {:.3e}",
            self.seed, self.param, self.index, self.analytic, self.numeric, self.error
        )
    }
}

#[derive(Clone, Debug)]
pub struct GroupReport {
    pub group: Group,
    pub instances: usize,
    pub checked: usize,
    pub skipped: usize,
    pub worst: Option<Sample>,
    /// Coordinates above tolerance.
    pub failures: Vec<Sample>,
}

impl GroupReport {
    pub fn worst_error(&self) -> f64 {
        self.worst.as_ref().map_or(0.0, |s| s.error)
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct Report {
    pub tolerance: f64,
    pub groups: Vec<GroupReport>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.groups.iter().all(GroupReport::passed)
    }
}

struct Case {
    names: Vec<String>,
    params: Vec<Tensor>,
    analytic: Vec<Tensor>,
    reference: Box<dyn Fn(&[Vec<f64>], &mut Kinks) -> f64>,
    /// `(parameter, flat index)` pairs to check.
    coords: Vec<(usize, usize)>,
}

pub fn run(opts: &Options) -> Result<Report> {
    let mut groups = Vec::with_capacity(opts.groups.len());
    for &group in &opts.groups {
        let mut report = GroupReport {
            group,
            instances: opts.seeds,
            checked: 0,
            skipped: 0,
            worst: None,
            failures: Vec::new(),
        };
        for i in 0..opts.seeds as u64 {
            let seed = opts.seed.wrapping_add(i);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((group as u64 + 1) << 40));
            let mut case = build(group, &mut rng)?;
            if opts.corrupt == Some(group) {
                for g in &mut case.analytic {
                    for v in g.data_mut() {
                        *v *= 1.01;
                    }
                }
            }
            check(&case, seed, opts, &mut report);
        }
        groups.push(report);
    }
    Ok(Report {
        tolerance: opts.tolerance,
        groups,
    })
}

fn check(case: &Case, seed: u64, opts: &Options, report: &mut GroupReport) {
    let base: Vec<Vec<f64>> = case
        .params
        .iter()
        .map(|t| t.data().iter().map(|&v| v as f64).collect())
        .collect();
    let mut probe = base.clone();
    for &(p, i) in &case.coords {
        let x0 = base[p][i];
        let mut kp = Kinks::new();
        let mut km = Kinks::new();
        probe[p][i] = x0 + opts.step;
        let fp = (case.reference)(&probe, &mut kp);
        probe[p][i] = x0 - opts.step;
        let fm = (case.reference)(&probe, &mut km);
        probe[p][i] = x0;
        if kp != km {
            report.skipped += 1;
            continue;
        }
        let numeric = (fp - fm) / (2.0 * opts.step);
        let analytic = case.analytic[p].data()[i] as f64;
        let error = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(opts.floor);
        report.checked += 1;
        let sample = Sample {
            seed,
            param: case.names[p].clone(),
            index: i,
            analytic,
            numeric,
            error,
        };
        if !(error <= opts.tolerance) {
            report.failures.push(sample.clone());
        }
        if report.worst.as_ref().map_or(true, |w| !(error <= w.error)) {
            report.worst = Some(sample);
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f32, hi: f32) -> Tensor {
    Tensor::from_fn(shape.to_vec(), |_| rng.gen_range(lo..hi))
}

fn analytic(params: &[Tensor], build: impl FnOnce(&mut Graph, &[Var]) -> Result<Var>) -> Result<Vec<Tensor>> {
    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.param(p)).collect();
    let loss = build(&mut g, &vars)?;
    let grads = g.backward(loss)?;
    Ok(vars.iter().map(|&v| grads.get_or_zeros(&g, v)).collect())
}

fn all_coords(params: &[Tensor]) -> Vec<(usize, usize)> {
    params
        .iter()
        .enumerate()
        .flat_map(|(p, t)| (0..t.len()).map(move |i| (p, i)))
        .collect()
}

fn field(t: &Tensor) -> Field {
    let (c, h, w) = t.chw().expect("C×H×W");
    Field::from_f32(c, h, w, t.data())
}

fn vec64(t: &Tensor) -> Vec<f64> {
    t.data().iter().map(|&v| v as f64).collect()
}

fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

fn build(group: Group, rng: &mut ChaCha8Rng) -> Result<Case> {
    match group {
        Group::Conv2d => {
            let params = vec![
                uniform(rng, &[2, 5, 4], -1.0, 1.0),
                uniform(rng, &[3, 2, 3, 3], -0.5, 0.5),
                uniform(rng, &[3], -0.3, 0.3),
            ];
            let target = uniform(rng, &[3, 5, 4], -0.5, 1.0);
            let t = target.clone();
            let grads = analytic(&params, |g, v| {
                let y = g.conv2d(&v[0], &v[1], &v[2])?;
                let y = g.relu(y);
                let t = g.constant(t);
                g.mse(&y, &t)
            })?;
            let tf = field(&target);
            Ok(Case {
                names: names(&["input", "weight", "bias"]),
                coords: all_coords(&params),
                analytic: grads,
                params,
                reference: Box::new(move |p, k| {
                    let x = Field::new(2, 5, 4, p[0].clone());
                    r::mse(&r::relu(r::conv2d(&x, &p[1], &p[2]), k), &tf)
                }),
            })
        }
        Group::Linear => {
            let params = vec![
                uniform(rng, &[6], -1.0, 1.0),
                uniform(rng, &[5, 6], -0.5, 0.5),
                uniform(rng, &[5], -0.5, 0.5),
            ];
            let target = uniform(rng, &[5], -1.0, 1.0);
            let t = target.clone();
            let grads = analytic(&params, |g, v| {
                let y = g.linear(&v[0], &v[1], &v[2])?;
                let t = g.constant(t);
                g.mse(&y, &t)
            })?;
            let tf = Field::new(5, 1, 1, vec64(&target));
            Ok(Case {
                names: names(&["input", "weight", "bias"]),
                coords: all_coords(&params),
                analytic: grads,
                params,
                reference: Box::new(move |p, _| r::mse(&Field::new(5, 1, 1, r::linear(&p[0], &p[1], &p[2])), &tf)),
            })
        }
        Group::Pooling => {
            let params = vec![uniform(rng, &[2, 5, 6], -1.0, 1.0)];
            let t_pool = uniform(rng, &[2, 2, 3], -1.0, 1.0);
            let t_gap = uniform(rng, &[2], -1.0, 1.0);
            let (tp, tg) = (t_pool.clone(), t_gap.clone());
            let grads = analytic(&params, |g, v| {
                let pooled = g.maxpool2x2(&v[0])?;
                let avg = g.global_avg_pool(&v[0])?;
                let (tp, tg) = (g.constant(tp), g.constant(tg));
                let a = g.mse(&pooled, &tp)?;
                let b = g.mse(&avg, &tg)?;
                g.add_scaled(&a, &b, 1.0)
            })?;
            let tpf = field(&t_pool);
            let tgf = Field::new(2, 1, 1, vec64(&t_gap));
            Ok(Case {
                names: names(&["input"]),
                coords: all_coords(&params),
                analytic: grads,
                params,
                reference: Box::new(move |p, k| {
                    let x = Field::new(2, 5, 6, p[0].clone());
                    let pooled = r::maxpool2x2(&x, k);
                    let avg = Field::new(2, 1, 1, r::global_avg_pool(&x));
                    r::mse(&pooled, &tpf) + r::mse(&avg, &tgf)
                }),
            })
        }
        Group::SoftmaxBlend => {
            let (n, d) = (4, 3);
            let mut params = vec![uniform(rng, &[n], -1.0, 1.0)];
            params.extend((0..n).map(|_| uniform(rng, &[d, d, d, 3], 0.0, 1.0)));
            let image = uniform(rng, &[3, 4, 4], 0.0, 1.0);
            let target = uniform(rng, &[3, 4, 4], 0.0, 1.0);
            let (img, t) = (image.clone(), target.clone());
            let grads = analytic(&params, |g, v| {
                let w = g.softmax(&v[0])?;
                let img = g.constant(img);
                let out = lut::blend(g, &v[1..], &w, &img)?;
                let t = g.constant(t);
                g.mse(&out, &t)
            })?;
            let (imf, tf) = (field(&image), field(&target));
            let mut nm = vec!["logits".to_string()];
            nm.extend((0..n).map(|i| format!("lut{i}")));
            Ok(Case {
                names: nm,
                coords: all_coords(&params),
                analytic: grads,
                params,
                reference: Box::new(move |p, k| {
                    let w = r::softmax(&p[0]);
                    let mapped: Vec<Field> = p[1..].iter().map(|l| r::trilinear(l, d, &imf, k)).collect();
                    r::mse(&r::weighted_sum(&mapped, &w), &tf)
                }),
            })
        }
        Group::Trilinear => {
            let d = 4;
            let params = vec![uniform(rng, &[d, d, d, 3], 0.0, 1.0), uniform(rng, &[3, 4, 5], -0.1, 1.1)];
            let target = uniform(rng, &[3, 4, 5], 0.0, 1.0);
            let t = target.clone();
            let grads = analytic(&params, |g, v| {
                let out = g.trilinear(&v[0], &v[1])?;
                let t = g.constant(t);
                g.mse(&out, &t)
            })?;
            let tf = field(&target);
            Ok(Case {
                names: names(&["lattice", "image"]),
                coords: all_coords(&params),
                analytic: grads,
                params,
                reference: Box::new(move |p, k| {
                    let img = Field::new(3, 4, 5, p[1].clone());
                    r::mse(&r::trilinear(&p[0], d, &img, k), &tf)
                }),
            })
        }
        Group::RefineK1 | Group::RefineK4 => {
            let steps = if group == Group::RefineK1 { 1 } else { 4 };
            let hidden = 4;
            let mut net = FlowNetParams::new(hidden, rng);
            net.conv3 = crate::nn::ConvLayer::uniform(hidden, 3, rng);
            let mut params: Vec<Tensor> = net.tensors().into_iter().cloned().collect();
            params.push(uniform(rng, &[3, 4, 4], 0.0, 1.0));
            let i_in = uniform(rng, &[3, 4, 4], 0.0, 1.0);
            let target = uniform(rng, &[3, 4, 4], 0.0, 1.0);
            let (inp, t) = (i_in.clone(), target.clone());
            let grads = analytic(&params, |g, v| {
                let inp = g.constant(inp);
                let (out, _) = flow::refine(g, &v[..6], &v[6], &inp, steps)?;
                let t = g.constant(t);
                g.mse(&out, &t)
            })?;
            let (inf, tf) = (field(&i_in), field(&target));
            let mut nm = FlowNetParams::tensor_names();
            nm.push("i_lut".into());
            Ok(Case {
                names: nm,
                coords: all_coords(&params),
                analytic: grads,
                params,
                reference: Box::new(move |p, k| {
                    let i_lut = Field::new(3, 4, 4, p[6].clone());
                    r::mse(&r::refine(&p[..6], &i_lut, &inf, steps, k), &tf)
                }),
            })
        }
        Group::EndToEnd => end_to_end(rng),
    }
}

/// A narrow model on a 3×8×8 image with every zero-initialized layer
/// randomized; 60 coordinates sampled across the three components. Every
/// other instance refines at a reduced processing resolution.
fn end_to_end(rng: &mut ChaCha8Rng) -> Result<Case> {
    let reduced = rng.gen_bool(0.5);
    let config = PipelineConfig {
        num_luts: 3,
        lattice_size: 3,
        flow_steps: 2,
        widths: [2, 3, 4],
        head_hidden: 4,
        flow_hidden: 4,
        analysis_resolution: Resolution::new(8, 8),
        processing_resolution: reduced.then_some(Resolution::new(6, 5)),
        seed: rng.gen(),
        ..PipelineConfig::default()
    };
    let mut model = FlowLut::new(config.clone())?;
    model.weight_net.logits = crate::nn::LinearLayer::uniform(4, 3, rng);
    model.flow_net.conv3 = crate::nn::ConvLayer::uniform(4, 3, rng);
    for lut in model.bank.luts_mut() {
        for v in lut.table_mut().data_mut() {
            *v += rng.gen_range(-0.05..0.05);
        }
    }
    let image = uniform(rng, &[3, 8, 8], 0.05, 0.95);
    let target = uniform(rng, &[3, 8, 8], 0.0, 1.0);
    let params: Vec<Tensor> = model.tensors().into_iter().cloned().collect();

    let mut g = Graph::new();
    let bound = model.bind(&mut g);
    let x = g.constant(image.clone());
    let t = g.constant(target.clone());
    let fwd = model.forward(&mut g, &bound, &x)?;
    let loss = total_loss(&mut g, &fwd.output, &t, None, config.perceptual_weight)?;
    let grads = g.backward(loss)?;
    let analytic: Vec<Tensor> = bound.all().iter().map(|&v| grads.get_or_zeros(&g, v)).collect();

    let n = config.num_luts;
    let mut coords = Vec::new();
    for (range, count) in [(0..n, 20), (n..n + 16, 20), (n + 16..n + 22, 20)] {
        let candidates: Vec<(usize, usize)> = range.flat_map(|p| (0..params[p].len()).map(move |i| (p, i))).collect();
        coords.extend(candidates.choose_multiple(rng, count).copied());
    }

    let (imf, tf) = (field(&image), field(&target));
    Ok(Case {
        names: model.tensor_names(),
        params,
        analytic,
        coords,
        reference: Box::new(move |p, k| r::mse(&r::enhance(&config, p, &imf, k), &tf)),
    })
}
