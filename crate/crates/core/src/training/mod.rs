//! Multi-output weighted squared-error training with plain SGD.

mod gradcheck;
mod loss;
mod trainer;

pub use gradcheck::{gradient_suite, GradCheckEntry, LAYER_TOLERANCE, NETWORK_SAMPLES, NETWORK_TOLERANCE};
pub use loss::{
    class_proportions, compute_class_weights, total_loss, weighted_sq_loss, ClassWeights, HeadGrads, LossReport,
};
pub use trainer::{evaluate, sgd_step, train, train_step, EpochLog, TrainConfig, TrainOutputs};

use crate::metrics::MetricsError;
use crate::network::NetworkError;
use crate::tensor::TensorError;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("loss input mismatch: {0}")]
    Shape(String),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("training set is empty")]
    EmptyDataset,
    #[error("non-finite value in {what} at step {step}; training aborted")]
    NonFinite { what: String, step: usize },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
