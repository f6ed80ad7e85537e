use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::flow::{self, FlowNetParams, RefinementTrace};
use crate::lut::{self, LutBank};
use crate::tensor::{Backend, Eager, Tensor};
use crate::weight_net::{self, WeightGeneratorParams};

/// The complete enhancement model.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowLut {
    pub config: PipelineConfig,
    pub bank: LutBank,
    pub weight_net: WeightGeneratorParams,
    pub flow_net: FlowNetParams,
}

/// Parameters of a [`FlowLut`] bound to a backend.
pub struct Bound<V> {
    pub luts: Vec<V>,
    pub weight_net: Vec<V>,
    pub flow_net: Vec<V>,
}

impl<V: Clone> Bound<V> {
    /// All handles in [`FlowLut::tensors`] order.
    pub fn all(&self) -> Vec<V> {
        self.luts
            .iter()
            .chain(&self.weight_net)
            .chain(&self.flow_net)
            .cloned()
            .collect()
    }
}

/// Every intermediate of one forward pass.
pub struct Forward<V> {
    pub weights: V,
    pub i_lut: V,
    /// Refiner output before the final clamp.
    pub refined: V,
    pub output: V,
    pub trace: RefinementTrace<V>,
}

impl FlowLut {
    /// Fresh model seeded from `config.seed`.
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let bank = if config.specialized_init {
            LutBank::specialized(config.num_luts, config.lattice_size)?
        } else {
            LutBank::identity(config.num_luts, config.lattice_size)?
        };
        let weight_net = WeightGeneratorParams::new(config.widths, config.head_hidden, config.num_luts, &mut rng);
        let flow_net = FlowNetParams::new(config.flow_hidden, &mut rng);
        Ok(Self {
            config,
            bank,
            weight_net,
            flow_net,
        })
    }

    /// Assembles a model from existing parts, checking they agree with
    /// `config`.
    pub fn from_parts(
        config: PipelineConfig,
        bank: LutBank,
        weight_net: WeightGeneratorParams,
        flow_net: FlowNetParams,
    ) -> Result<Self> {
        config.validate()?;
        if bank.len() != config.num_luts || bank.lattice_size() != config.lattice_size {
            return Err(Error::shape(
                "model",
                format!(
                    "bank has {} LUTs of size {}, config wants {} of size {}",
                    bank.len(),
                    bank.lattice_size(),
                    config.num_luts,
                    config.lattice_size
                ),
            ));
        }
        let wref = WeightGeneratorParams::zeros(config.widths, config.head_hidden, config.num_luts);
        let fref = FlowNetParams::zeros(config.flow_hidden);
        let shapes_match = |a: Vec<&Tensor>, b: Vec<&Tensor>| {
            a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x.shape() == y.shape())
        };
        if !shapes_match(weight_net.tensors(), wref.tensors()) {
            return Err(Error::shape("model", "weight generator layers do not match the config"));
        }
        if !shapes_match(flow_net.tensors(), fref.tensors()) {
            return Err(Error::shape("model", "flow network layers do not match the config"));
        }
        Ok(Self {
            config,
            bank,
            weight_net,
            flow_net,
        })
    }

    /// Trainable tensors: LUT lattices, then the weight generator, then the
    /// flow network.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> = self.bank.luts().iter().map(|l| l.table()).collect();
        out.extend(self.weight_net.tensors());
        out.extend(self.flow_net.tensors());
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = self.bank.luts_mut().iter_mut().map(|l| l.table_mut()).collect();
        out.extend(self.weight_net.tensors_mut());
        out.extend(self.flow_net.tensors_mut());
        out
    }

    /// Whether each entry of [`tensors`](Self::tensors) receives updates.
    pub fn trainable_mask(&self) -> Vec<bool> {
        let mut mask: Vec<bool> = self.bank.luts().iter().map(|l| l.trainable).collect();
        mask.resize(mask.len() + self.weight_net.tensors().len() + self.flow_net.tensors().len(), true);
        mask
    }

    pub fn tensor_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .bank
            .names()
            .iter()
            .enumerate()
            .map(|(i, n)| format!("lut.{i}.{n}"))
            .collect();
        names.extend(WeightGeneratorParams::tensor_names().into_iter().map(|n| format!("weight_net.{n}")));
        names.extend(FlowNetParams::tensor_names().into_iter().map(|n| format!("flow_net.{n}")));
        names
    }

    pub fn bind<B: Backend>(&self, b: &mut B) -> Bound<B::Value> {
        Bound {
            luts: self.bank.luts().iter().map(|l| b.param(l.table())).collect(),
            weight_net: self.weight_net.bind(b),
            flow_net: self.flow_net.bind(b),
        }
    }

    /// Full forward pass on any backend.
    pub fn forward<B: Backend>(&self, b: &mut B, p: &Bound<B::Value>, image: &B::Value) -> Result<Forward<B::Value>> {
        let (c, h, w) = b.value(image).chw()?;
        if c != 3 {
            return Err(Error::shape("enhance", format!("image must have 3 channels, got {c}")));
        }
        let a = self.config.analysis_resolution;
        let small = b.resize_bilinear(image, a.height, a.width)?;
        let weights = weight_net::weightgen_forward(b, &p.weight_net, &small)?;
        drop(small);
        let i_lut = lut::blend(b, &p.luts, &weights, image)?;
        let (refined, trace) = self.refine_stage(b, &p.flow_net, &i_lut, image, (h, w))?;
        let output = b.clamp01(refined.clone());
        Ok(Forward {
            weights,
            i_lut,
            refined,
            output,
            trace,
        })
    }

    fn refine_stage<B: Backend>(
        &self,
        b: &mut B,
        flow_params: &[B::Value],
        i_lut: &B::Value,
        image: &B::Value,
        (h, w): (usize, usize),
    ) -> Result<(B::Value, RefinementTrace<B::Value>)> {
        let k = self.config.flow_steps;
        match self.config.processing_resolution {
            Some(r) if (r.height, r.width) != (h, w) => {
                // Refine a resampled copy and carry the correction back.
                let lut_s = b.resize_bilinear(i_lut, r.height, r.width)?;
                let in_s = b.resize_bilinear(image, r.height, r.width)?;
                let (refined_s, trace) = flow::refine(b, flow_params, &lut_s, &in_s, k)?;
                let correction = b.sub(&refined_s, &lut_s)?;
                let up = b.resize_bilinear(&correction, h, w)?;
                Ok((b.add_scaled(i_lut, &up, 1.0)?, trace))
            }
            _ => flow::refine(b, flow_params, i_lut, image, k),
        }
    }

    /// Inference: enhanced image clamped to `[0, 1]`.
    pub fn enhance(&self, image: &Tensor) -> Result<Tensor> {
        self.enhance_traced(image).map(|(out, _)| out)
    }

    /// Inference that also returns the refinement trace. Blending streams
    /// one LUT at a time so that only one mapped image is alive.
    pub fn enhance_traced(&self, image: &Tensor) -> Result<(Tensor, RefinementTrace<Tensor>)> {
        let (c, _, _) = image.chw()?;
        if c != 3 {
            return Err(Error::shape("enhance", format!("image must have 3 channels, got {c}")));
        }
        let weights = self.fusion_weights(image)?;
        let i_lut = self.bank.blend_apply(&weights, image)?;
        self.refine(i_lut, image)
    }

    /// Refinement and final clamp for an already blended `i_lut`.
    pub fn refine(&self, i_lut: Tensor, image: &Tensor) -> Result<(Tensor, RefinementTrace<Tensor>)> {
        let (_, h, w) = image.chw()?;
        let mut e = Eager;
        let i_lut = e.constant(i_lut);
        let flow_params = self.flow_net.bind(&mut e);
        let input = e.constant(image.clone());
        let (refined, trace) = self.refine_stage(&mut e, &flow_params, &i_lut, &input, (h, w))?;
        drop((i_lut, input));
        let out = e.clamp01(refined);
        let trace = RefinementTrace {
            steps: trace
                .steps
                .into_iter()
                .map(|s| flow::RefinementStep {
                    residual_rms: s.residual_rms,
                    mean_abs_flow: s.mean_abs_flow,
                    image: Eager::into_tensor(s.image),
                })
                .collect(),
        };
        Ok((Eager::into_tensor(out), trace))
    }

    pub fn fusion_weights(&self, image: &Tensor) -> Result<Tensor> {
        let mut e = Eager;
        let a = self.config.analysis_resolution;
        let x = e.constant(image.clone());
        let small = e.resize_bilinear(&x, a.height, a.width)?;
        let params = self.weight_net.bind(&mut e);
        let w = weight_net::weightgen_forward(&mut e, &params, &small)?;
        Ok(Eager::into_tensor(w))
    }
}
