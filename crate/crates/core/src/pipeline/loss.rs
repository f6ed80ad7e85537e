use crate::error::Result;
use crate::tensor::{Backend, Tensor};

/// A differentiable image distance added to the MSE term with a weight.
///
/// Implementations build their value out of backend operations so that it
/// takes part in backpropagation.
pub trait PerceptualLoss<B: Backend> {
    fn name(&self) -> &str;
    /// A one-element value.
    fn eval(&self, b: &mut B, out: &B::Value, gt: &B::Value) -> Result<B::Value>;
}

/// Always zero.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoPerceptual;

impl<B: Backend> PerceptualLoss<B> for NoPerceptual {
    fn name(&self) -> &str {
        "none"
    }

    fn eval(&self, b: &mut B, _out: &B::Value, _gt: &B::Value) -> Result<B::Value> {
        Ok(b.constant(Tensor::scalar(0.0)))
    }
}

/// `mse(out, gt) + weight · perceptual(out, gt)`.
pub fn total_loss<B: Backend>(
    b: &mut B,
    out: &B::Value,
    gt: &B::Value,
    perceptual: Option<&dyn PerceptualLoss<B>>,
    weight: f64,
) -> Result<B::Value> {
    let mse = b.mse(out, gt)?;
    match perceptual {
        Some(p) if weight != 0.0 => {
            let extra = p.eval(b, out, gt)?;
            b.add_scaled(&mse, &extra, weight as f32)
        }
        _ => Ok(mse),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::tensor::Eager;
    use std::rc::Rc;

    struct Constant(f32);

    impl PerceptualLoss<Eager> for Constant {
        fn name(&self) -> &str {
            "constant"
        }

        fn eval(&self, b: &mut Eager, _: &Rc<Tensor>, _: &Rc<Tensor>) -> Result<Rc<Tensor>> {
            Ok(b.constant(Tensor::scalar(self.0)))
        }
    }

    #[test]
    fn weighting() {
        let mut e = Eager;
        let out = e.constant(Tensor::full([3, 4, 4], 0.6));
        let gt = e.constant(Tensor::full([3, 4, 4], 0.5));
        let plain = total_loss(&mut e, &out, &gt, None, 0.1).unwrap().item();
        assert!((plain - 0.01).abs() < 1e-7);
        let with = total_loss(&mut e, &out, &gt, Some(&Constant(0.5)), 0.1).unwrap().item();
        assert!((with - (plain + 0.05)).abs() < 1e-7);
        let same = total_loss(&mut e, &gt, &gt, Some(&NoPerceptual), 0.1).unwrap().item();
        assert_eq!(same, 0.0);
    }

    #[test]
    fn shape_mismatch() {
        let mut e = Eager;
        let a = e.constant(Tensor::zeros([3, 2, 2]));
        let b = e.constant(Tensor::zeros([3, 2, 3]));
        assert!(matches!(total_loss(&mut e, &a, &b, None, 0.1), Err(Error::Shape { .. })));
    }
}
