//! The segmentation network: a five-stage encoder, the VH-stage of
//! vertical (`k×1`) and horizontal (`1×k`) convolution paths, and a
//! five-step fused decoder that emits one full-resolution pre-output per
//! step. The final head is a convolution over the five concatenated
//! pre-outputs.

mod config;
mod model;
mod params;

pub use config::{parse_size, Combine, NetworkConfig, NUM_CLASSES, STAGES, VH_DEPTH, VH_KERNELS};
pub use model::{argmax_masks, forward, images_to_tensor, predict, vh_stage, ForwardOutputs, Network, Trace};
pub use params::{layout, Gradients, LayerDef, LayerKind, ModelParams};

use crate::tensor::TensorError;

#[derive(Debug, thiserror::Error)]
pub enum NetworkError {
    #[error("invalid network config: {0}")]
    Config(String),
    #[error("invalid network input: {0}")]
    Input(String),
    #[error("parameter {0:?} missing from model")]
    MissingParam(String),
    #[error("model manifest mismatch: {0}")]
    Manifest(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Builds freshly initialized parameters for `config`.
pub fn build(config: &NetworkConfig, seed: u64) -> Result<ModelParams, NetworkError> {
    ModelParams::build(config, seed)
}
