//! Small CPU deep-learning engine: layers with hand-written backward passes,
//! Adam, the branched decoder, the linear baseline and checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod model;
mod real;
mod tensor;
pub mod train;

use thiserror::Error;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{load_model, read_model, save_model, write_model, TrainedModel};
pub use model::{Architecture, BnState, Descriptor, Model, Output, ParamSpec, Target};
pub use real::Real;
pub use tensor::Tensor;
pub use train::{predict, train, train_with, EpochLoss, LossHistory, Prediction, TrainConfig, TrainData};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("batchnorm needs a batch of at least 2 in training mode, got {0}")]
    BatchTooSmall(usize),
    #[error("training diverged in epoch {epoch}: loss {loss}")]
    Divergence { epoch: usize, loss: f64 },
    #[error("model has no batchnorm running statistics; train it before inference")]
    Untrained,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error(transparent)]
    Dataset(#[from] crate::dataset::DatasetError),
    #[error(transparent)]
    Format(#[from] crate::binfmt::FormatError),
    #[error(transparent)]
    Kv(#[from] crate::kv::KvError),
    #[error("io error: {0}")]
    Io(String),
}
