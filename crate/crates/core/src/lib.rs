//! FlowLUT: a differentiable 3D-LUT ensemble with content-aware fusion and
//! iterative residual refinement, for photo enhancement.
//!
//! The model runs in three stages:
//!
//! 1. [`weight_net`] looks at a downsampled copy of the input and produces
//!    softmax fusion weights over the LUT bank.
//! 2. [`lut`] applies every LUT of the bank by trilinear interpolation and
//!    blends the results with those weights.
//! 3. [`flow`] refines the blended image in `K` small residual steps.
//!
//! [`pipeline`] ties the stages together and adds training, checkpoints and
//! cost accounting.

pub mod bench;
pub mod cli;
pub mod error;
pub mod flow;
pub mod gradcheck;
pub mod imageio;
pub mod lut;
pub mod nn;
pub mod pipeline;
pub mod reference;
pub mod tensor;
pub mod weight_net;

pub use error::{CheckpointError, Error, Result};
pub use tensor::Tensor;
