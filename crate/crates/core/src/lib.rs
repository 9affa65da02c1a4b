//! Speckle-based multimodal sensing toolkit.
//!
//! A virtual soft material is illuminated by a coherent beam; a stimulus
//! (indentation depth, contact position, temperature, indenter shape)
//! perturbs the phase screen and changes the far-field speckle image. A
//! convolutional decoder trained on rendered images recovers the stimulus.
//!
//! Layout:
//! - [`optics`]: material model, speckle rendering, correlation, calibration
//! - [`dataset`]: sweep protocol, preprocessing, scaling, dataset container
//! - [`nn`]: small CPU deep-learning engine and the decoder architectures
//! - [`eval`]: metrics, scripted experiments, baseline comparison
//! - [`kv`]: the flat `key = value` configuration format

pub mod dataset;
pub mod eval;
mod binfmt;
pub mod kv;
pub mod nn;
pub mod optics;
pub mod seed;

pub use binfmt::FormatError;

pub use dataset::{Dataset, SweepProtocol};
pub use optics::{MaterialConfig, MaterialField, Shape, SpeckleImage, StimulusVector};
