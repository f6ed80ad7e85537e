//! The assembled model with its training and bookkeeping utilities.

mod accounting;
mod checkpoint;
mod config;
mod loss;
mod model;
mod optim;
mod synth;
mod train;

pub use accounting::{
    conv_flops, count_flops, thousands, count_params, count_params_for, FlopEntry, FlopReport, ParamBreakdown, Stage,
    BLEND_FLOPS_PER_PIXEL, REFINE_UPDATE_FLOPS_PER_PIXEL, RESIZE_FLOPS_PER_VALUE, TRILINEAR_FLOPS_PER_PIXEL,
};
pub use checkpoint::{from_bytes, load_checkpoint, save_checkpoint, to_bytes, MAGIC, VERSION};
pub use config::{PipelineConfig, Preset, Resolution};
pub use loss::{total_loss, NoPerceptual, PerceptualLoss};
pub use model::{Bound, FlowLut, Forward};
pub use optim::{AdamW, OptimizerState};
pub use synth::{make_synthetic_pair, smooth_field, synthetic_dataset, SyntheticDistortion};
pub use train::{evaluate, LossCurve, Trainer};
