use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// AdamW hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamW {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// First and second moments per parameter tensor, and the step count.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
}

impl OptimizerState {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let m: Vec<Tensor> = params.into_iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self {
            v: m.clone(),
            m,
            t: 0,
        }
    }
}

impl AdamW {
    /// One update. `grads[i] == None` leaves parameter `i` and its moments
    /// untouched (frozen). Gradients are checked for finiteness before any
    /// parameter changes.
    pub fn step(
        &self,
        params: &mut [&mut Tensor],
        grads: &[Option<Tensor>],
        names: &[String],
        state: &mut OptimizerState,
    ) -> Result<()> {
        if params.len() != grads.len() || params.len() != state.m.len() || params.len() != state.v.len() {
            return Err(Error::shape(
                "adamw_step",
                format!(
                    "{} params, {} grads, {} moment tensors",
                    params.len(),
                    grads.len(),
                    state.m.len()
                ),
            ));
        }
        let step = state.t + 1;
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            let Some(g) = g else { continue };
            if g.shape() != p.shape() || state.m[i].shape() != p.shape() {
                return Err(Error::shape(
                    "adamw_step",
                    format!("parameter {i}: {:?} vs gradient {:?}", p.shape(), g.shape()),
                ));
            }
            if !g.all_finite() {
                let param = names.get(i).cloned().unwrap_or_else(|| format!("#{i}"));
                return Err(Error::NonFiniteGradient { param, step });
            }
        }

        state.t = step;
        let bc1 = 1.0 - self.beta1.powi(step as i32);
        let bc2 = 1.0 - self.beta2.powi(step as i32);
        let decay = 1.0 - self.lr * self.weight_decay;
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let Some(g) = g else { continue };
            let m = state.m[i].data_mut();
            let v = state.v[i].data_mut();
            for (((theta, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                let gi = gi as f64;
                let m_new = self.beta1 * *mi as f64 + (1.0 - self.beta1) * gi;
                let v_new = self.beta2 * *vi as f64 + (1.0 - self.beta2) * gi * gi;
                *mi = m_new as f32;
                *vi = v_new as f32;
                let m_hat = m_new / bc1;
                let v_hat = v_new / bc2;
                let updated = *theta as f64 * decay - self.lr * m_hat / (v_hat.sqrt() + self.eps);
                *theta = updated as f32;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("p{i}")).collect()
    }

    #[test]
    fn zero_gradient_no_decay_is_stationary() {
        let mut p = Tensor::from_fn([5], |i| i as f32 * 0.3 - 0.7);
        let before = p.clone();
        let mut st = OptimizerState::new([&p]);
        let opt = AdamW {
            weight_decay: 0.0,
            ..AdamW::default()
        };
        opt.step(&mut [&mut p], &[Some(Tensor::zeros([5]))], &names(1), &mut st).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn decoupled_decay_alone() {
        let mut p = Tensor::from_fn([4], |i| 0.25 + i as f32);
        let before = p.clone();
        let mut st = OptimizerState::new([&p]);
        AdamW::default()
            .step(&mut [&mut p], &[Some(Tensor::zeros([4]))], &names(1), &mut st)
            .unwrap();
        for (a, b) in p.data().iter().zip(before.data()) {
            assert_eq!(*a, (*b as f64 * (1.0 - 1e-6)) as f32);
        }
    }

    #[test]
    fn scalar_reference() {
        // Textbook AdamW on one scalar, written out in f64.
        let (lr, b1, b2, eps) = (1e-4, 0.9, 0.999, 1e-8);
        let g: f64 = 0.5;
        let m = (1.0 - b1) * g;
        let v = (1.0 - b2) * g * g;
        let expected = -lr * (m / (1.0 - b1)) / ((v / (1.0 - b2)).sqrt() + eps);

        let mut p = Tensor::zeros([1]);
        let mut st = OptimizerState::new([&p]);
        let opt = AdamW {
            weight_decay: 0.0,
            ..AdamW::default()
        };
        opt.step(&mut [&mut p], &[Some(Tensor::scalar(0.5))], &names(1), &mut st).unwrap();
        assert!((p.item() as f64 - expected).abs() < 1e-10);
        assert!((expected + lr * (1.0 - 2e-8)).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut a = Tensor::zeros([2]);
        let mut b = Tensor::zeros([2]);
        let mut st = OptimizerState::new([&a, &b]);
        let grads = [Some(Tensor::zeros([2])), Some(Tensor::new([2], vec![0.0, f32::NAN]).unwrap())];
        let err = AdamW::default()
            .step(&mut [&mut a, &mut b], &grads, &names(2), &mut st)
            .unwrap_err();
        match err {
            Error::NonFiniteGradient { param, step } => {
                assert_eq!(param, "p1");
                assert_eq!(step, 1);
            }
            other => panic!("{other}"),
        }
        assert_eq!(st.t, 0);
    }

    #[test]
    fn frozen_parameters_are_skipped() {
        let mut a = Tensor::full([2], 1.0);
        let mut st = OptimizerState::new([&a]);
        AdamW::default().step(&mut [&mut a], &[None], &names(1), &mut st).unwrap();
        assert_eq!(a.data(), [1.0, 1.0]);
    }
}
