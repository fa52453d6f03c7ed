//! Complex-valued layers and the toy encoder / autoencoder assemblies.

use thiserror::Error;

use crate::autodiff::AutodiffError;
use crate::ctensor::TensorError;
use crate::polyphase::PolyphaseError;
use crate::select::SelectError;

pub mod layers;
pub mod model;

pub use layers::{
    apply_conv, blur, classify_loss, cmax_global, cmax_pool, cmax_sliding, global_mean, lift, lower,
    mean_modulus, modrelu, modulus_logits, split_relu, value_and_grad, ConvLayer, Feat, Linear,
    ModRelu, PoolMode,
};
pub use model::{
    build_model, Forward, Head, Model, ModelSpec, Prediction, Representation, Sampling, Target,
    Trace,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CvnnError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Polyphase(#[from] PolyphaseError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error("shape: {0}")]
    Shape(String),
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
}
