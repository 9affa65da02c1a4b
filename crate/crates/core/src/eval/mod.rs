//! Metrics, presets and the scripted experiments built on the encoder,
//! dataset and network modules.

mod baseline;
mod experiments;
mod preset;
mod report;

pub use baseline::{compare_models, least_squares, CompareRow, CompareTable, LeastSquares};
pub use experiments::{
    experiment_drift, experiment_interface, experiment_intervals, experiment_resize,
    experiment_sample_size, experiment_shapes, fit, mean3, protocol_bounds, sample_indices,
    split_indices, usable_crop, with_split, DriftRow, DriftTable, InterfaceResult, InterfaceSetup,
    IntervalRow, IntervalSet, IntervalTable, ResizeRow, ResizeTable, SampleSizeRow,
    SampleSizeTable, ShapeResult, ShapeSetup,
};
pub use preset::Preset;
pub use report::{
    build_report, evaluate_regression, mean_std, predict_rows, predictions_csv, EvalReport,
    FeatureError, Latency, PredictionRow,
};

use crate::dataset::DatasetError;
use crate::kv::KvError;
use crate::nn::NnError;
use crate::optics::OpticsError;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Optics(#[from] OpticsError),
    #[error(transparent)]
    Kv(#[from] KvError),
    #[error("test set is empty")]
    EmptyTest,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("mismatch: {0}")]
    Mismatch(String),
}
