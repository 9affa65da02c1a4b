//! Data-collection protocol, preprocessing, min-max scaling and the binary
//! dataset container.

pub mod format;
pub mod generate;
pub mod preprocess;
pub mod protocol;
pub mod scaling;

use thiserror::Error;

use crate::optics::{OpticsError, StimulusVector};

pub use format::{load_dataset, read_dataset, save_dataset, write_dataset};
pub use generate::{generate_dataset, generate_from_stimuli, render_raw, render_sample, DriftConfig, GenerateOptions};
pub use preprocess::{preprocess, Preprocess};
pub use protocol::{sweep_grid, AxisSweep, SweepProtocol};
pub use scaling::{ScaledStimulus, ScalingBounds};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("empty protocol: {0} count is zero")]
    EmptyProtocol(&'static str),
    #[error("crop {crop} exceeds downsampled size {size}")]
    CropTooLarge { crop: usize, size: usize },
    #[error("invalid preprocessing: {0}")]
    InvalidPreprocess(String),
    #[error("zero-variance image cannot be normalized")]
    ZeroVariance,
    #[error("degenerate scaling bounds for feature {feature}: min = max = {value}")]
    DegenerateBounds { feature: usize, value: f64 },
    #[error("sample {index}: {source}")]
    Sample {
        index: usize,
        #[source]
        source: Box<DatasetError>,
    },
    #[error(transparent)]
    Optics(#[from] OpticsError),
    #[error(transparent)]
    Kv(#[from] crate::kv::KvError),
    #[error(transparent)]
    Format(#[from] format::FormatError),
    #[error("dataset is empty")]
    Empty,
    #[error("inconsistent dataset: {0}")]
    Inconsistent(String),
}

/// One preprocessed image with its ground-truth stimulus.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// Row-major `side`×`side` standardized image.
    pub image: Vec<f32>,
    /// Stimulus actually applied (after jitter).
    pub raw: StimulusVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub image_side: usize,
    pub samples: Vec<Sample>,
    pub creation_seed: u64,
    /// Free-form `key = value` provenance (protocol, noise, drift, split).
    pub metadata: String,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Min-max bounds of the raw stimuli in this dataset.
    pub fn bounds(&self) -> Result<ScalingBounds, DatasetError> {
        ScalingBounds::from_stimuli(self.samples.iter().map(|s| &s.raw))
    }

    /// Bounds that only need to be non-degenerate on `required` features.
    pub fn bounds_for(&self, required: &[usize]) -> Result<ScalingBounds, DatasetError> {
        ScalingBounds::from_stimuli_for(self.samples.iter().map(|s| &s.raw), required)
    }

    pub fn scaled(&self, bounds: &ScalingBounds) -> Result<Vec<ScaledStimulus>, DatasetError> {
        self.samples.iter().map(|s| bounds.scale(&s.raw)).collect()
    }

    /// New dataset holding the samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            image_side: self.image_side,
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            creation_seed: self.creation_seed,
            metadata: self.metadata.clone(),
        }
    }

    /// Concatenate images into one contiguous `[n, side*side]` buffer.
    pub fn image_matrix(&self) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.samples.len() * self.image_side * self.image_side);
        for s in &self.samples {
            out.extend_from_slice(&s.image);
        }
        out
    }
}
