use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::{total_loss, PerceptualLoss};
use super::model::FlowLut;
use super::optim::{AdamW, OptimizerState};
use crate::error::{Error, Result};
use crate::tensor::{Backend, Graph, Tensor};

/// Per-step and per-epoch losses of a training run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossCurve {
    /// `(optimizer step, mean batch loss before the update)`.
    pub steps: Vec<(u64, f64)>,
    pub epochs: Vec<f64>,
}

impl LossCurve {
    /// `step,loss` CSV with a header row.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "step,loss")?;
        for (step, loss) in &self.steps {
            writeln!(out, "{step},{loss:e}")?;
        }
        out.flush()
    }
}

pub struct Trainer<'a> {
    pub optimizer: AdamW,
    pub perceptual: Option<&'a dyn PerceptualLoss<Graph>>,
    pub perceptual_weight: f64,
}

impl<'a> Trainer<'a> {
    /// Optimizer and loss weight from the model's config.
    pub fn from_config(model: &FlowLut) -> Self {
        let c = &model.config;
        Self {
            optimizer: AdamW {
                lr: c.lr,
                beta1: c.beta1,
                beta2: c.beta2,
                eps: c.eps,
                weight_decay: c.weight_decay,
            },
            perceptual: None,
            perceptual_weight: c.perceptual_weight,
        }
    }

    pub fn with_perceptual(mut self, p: &'a dyn PerceptualLoss<Graph>) -> Self {
        self.perceptual = Some(p);
        self
    }

    /// Loss and summed parameter gradients for one `(input, target)` pair.
    pub fn sample_gradients(&self, model: &FlowLut, input: &Tensor, target: &Tensor) -> Result<(f64, Vec<Tensor>)> {
        let mut g = Graph::new();
        let bound = model.bind(&mut g);
        let x = g.constant(input.clone());
        let gt = g.constant(target.clone());
        let fwd = model.forward(&mut g, &bound, &x)?;
        let loss = total_loss(&mut g, &fwd.output, &gt, self.perceptual, self.perceptual_weight)?;
        let value = g.value(loss).item() as f64;
        let mut grads = g.backward(loss)?;
        let per_param = bound
            .all()
            .into_iter()
            .map(|v| grads.take(v).unwrap_or_else(|| Tensor::zeros(g.value(v).shape())))
            .collect();
        Ok((value, per_param))
    }

    /// One optimizer step on `batch`: gradients are averaged over samples.
    /// Returns the mean loss measured before the update.
    pub fn step(&self, model: &mut FlowLut, state: &mut OptimizerState, batch: &[(&Tensor, &Tensor)]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Training("empty batch".into()));
        }
        let mut loss_sum = 0.0;
        let mut acc: Option<Vec<Vec<f64>>> = None;
        for (input, target) in batch {
            let (loss, grads) = self.sample_gradients(model, input, target)?;
            loss_sum += loss;
            let acc = acc.get_or_insert_with(|| grads.iter().map(|g| vec![0.0; g.len()]).collect());
            for (a, g) in acc.iter_mut().zip(&grads) {
                for (x, &y) in a.iter_mut().zip(g.data()) {
                    *x += y as f64;
                }
            }
        }
        let n = batch.len() as f64;
        let mean_loss = loss_sum / n;
        if !mean_loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                loss: mean_loss,
                step: state.t,
            });
        }
        let mask = model.trainable_mask();
        let shapes: Vec<Vec<usize>> = model.tensors().iter().map(|t| t.shape().to_vec()).collect();
        let grads: Vec<Option<Tensor>> = acc
            .unwrap_or_default()
            .into_iter()
            .zip(shapes)
            .zip(mask)
            .map(|((sum, shape), trainable)| {
                trainable.then(|| Tensor::new(shape, sum.iter().map(|&v| (v / n) as f32).collect()))
                    .transpose()
            })
            .collect::<Result<_>>()?;
        let names = model.tensor_names();
        self.optimizer.step(&mut model.tensors_mut(), &grads, &names, state)?;
        Ok(mean_loss)
    }

    /// Runs `model.config.epochs` passes over `data`, shuffling each epoch
    /// with a generator seeded from `model.config.seed`. `on_epoch` sees the
    /// epoch index and its mean loss.
    pub fn train(
        &self,
        model: &mut FlowLut,
        state: &mut OptimizerState,
        data: &[(Tensor, Tensor)],
        mut on_epoch: impl FnMut(usize, f64),
    ) -> Result<LossCurve> {
        if data.is_empty() {
            return Err(Error::Training("dataset is empty".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(model.config.seed ^ 0x5eed_0f_da7a);
        let mut order: Vec<usize> = (0..data.len()).collect();
        let batch_size = model.config.batch_size;
        let mut curve = LossCurve::default();
        for epoch in 0..model.config.epochs {
            order.shuffle(&mut rng);
            let mut epoch_sum = 0.0;
            let mut batches = 0;
            for chunk in order.chunks(batch_size) {
                let batch: Vec<(&Tensor, &Tensor)> = chunk.iter().map(|&i| (&data[i].0, &data[i].1)).collect();
                let step = state.t;
                let loss = self.step(model, state, &batch)?;
                curve.steps.push((step, loss));
                epoch_sum += loss;
                batches += 1;
            }
            let mean = epoch_sum / batches as f64;
            curve.epochs.push(mean);
            on_epoch(epoch, mean);
        }
        Ok(curve)
    }
}

/// Mean MSE of the model's clamped output over `data`.
pub fn evaluate(model: &FlowLut, data: &[(Tensor, Tensor)]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Training("dataset is empty".into()));
    }
    let mut sum = 0.0;
    for (input, target) in data {
        sum += crate::tensor::ops::mse_f64(&model.enhance(input)?, target)?;
    }
    Ok(sum / data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{synthetic_dataset, PipelineConfig, Resolution};

    fn tiny(lr: f64, wd: f64) -> FlowLut {
        FlowLut::new(PipelineConfig {
            num_luts: 2,
            lattice_size: 5,
            flow_steps: 2,
            widths: [4, 4, 4],
            head_hidden: 4,
            flow_hidden: 4,
            analysis_resolution: Resolution::new(8, 8),
            lr,
            weight_decay: wd,
            epochs: 3,
            batch_size: 2,
            seed: 4,
            ..PipelineConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let mut model = tiny(0.0, 0.0);
        let before = model.clone();
        let data = synthetic_dataset(3, 1, 10, 10).unwrap();
        let mut st = OptimizerState::new(model.tensors());
        let curve = Trainer::from_config(&model).train(&mut model, &mut st, &data, |_, _| {}).unwrap();
        assert_eq!(model, before);
        assert_eq!(curve.steps.len(), 6);
        assert_eq!(curve.epochs.len(), 3);
        assert_eq!(st.t, 6);
    }

    #[test]
    fn deterministic_runs() {
        let data = synthetic_dataset(3, 1, 10, 10).unwrap();
        let run = || {
            let mut model = tiny(1e-3, 0.01);
            let mut st = OptimizerState::new(model.tensors());
            let curve = Trainer::from_config(&model).train(&mut model, &mut st, &data, |_, _| {}).unwrap();
            (model, st, curve)
        };
        let (m1, s1, c1) = run();
        let (m2, s2, c2) = run();
        assert_eq!(m1, m2);
        assert_eq!(s1, s2);
        assert_eq!(c1, c2);
    }

    #[test]
    fn empty_dataset_rejected() {
        let mut model = tiny(1e-3, 0.0);
        let mut st = OptimizerState::new(model.tensors());
        let err = Trainer::from_config(&model).train(&mut model, &mut st, &[], |_, _| {});
        assert!(matches!(err, Err(Error::Training(_))));
    }

    #[test]
    fn csv_format() {
        let curve = LossCurve {
            steps: vec![(0, 0.5), (1, 0.25)],
            epochs: vec![0.375],
        };
        let mut buf = Vec::new();
        curve.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "step,loss\n0,5e-1\n1,2.5e-1\n");
    }
}
