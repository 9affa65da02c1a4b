//! Speckle encoder: virtual soft material, far-field rendering and the
//! correlation statistic used to tune its sensitivity.

mod blur;
pub mod calibrate;
pub mod config;
pub mod contact;
pub mod correlation;
pub mod field;
pub mod force;
pub mod pgm;
pub mod render;

use thiserror::Error;

pub use calibrate::{
    calibrate_sensitivity, measure_correlation, Calibration, CalibrationOptions, CalibrationTarget,
    StimulusAxis,
};
pub use config::{MaterialConfig, SensitivityMode};
pub use contact::{surface_displacement, Indenter};
pub use correlation::{pearson, speckle_correlation};
pub use field::{build_material, MaterialField};
pub use force::{force_from_depth, ForceCurve, ForceEstimate};
pub use render::{render_intensity, render_scene, render_speckle, NoiseConfig, Pixels, Scene, SpeckleImage};

/// Indenter cross-section. `None` is the default cylindrical indenter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Shape {
    #[default]
    None,
    Circle,
    Square,
    Triangle,
}

impl Shape {
    pub const CLASSES: [Shape; 3] = [Shape::Circle, Shape::Square, Shape::Triangle];

    pub fn code(self) -> u8 {
        match self {
            Shape::None => 0,
            Shape::Circle => 1,
            Shape::Square => 2,
            Shape::Triangle => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Shape> {
        match code {
            0 => Some(Shape::None),
            1 => Some(Shape::Circle),
            2 => Some(Shape::Square),
            3 => Some(Shape::Triangle),
            _ => None,
        }
    }

    /// Index into [`Shape::CLASSES`], or `None` for the default indenter.
    pub fn class_index(self) -> Option<usize> {
        Self::CLASSES.iter().position(|s| *s == self)
    }

    pub fn name(self) -> &'static str {
        match self {
            Shape::None => "none",
            Shape::Circle => "circle",
            Shape::Square => "square",
            Shape::Triangle => "triangle",
        }
    }
}

impl std::str::FromStr for Shape {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(Shape::None),
            "circle" => Ok(Shape::Circle),
            "square" => Ok(Shape::Square),
            "triangle" => Ok(Shape::Triangle),
            other => Err(format!("unknown shape {other:?}")),
        }
    }
}

/// Physical stimulus applied to the material.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StimulusVector {
    /// Indentation depth in micrometers.
    pub depth: f64,
    /// Contact position along the vertical material axis in micrometers.
    pub position: f64,
    /// Material temperature in degrees Celsius.
    pub temperature: f64,
    pub shape: Shape,
}

impl StimulusVector {
    pub fn new(depth: f64, position: f64, temperature: f64) -> Self {
        Self {
            depth,
            position,
            temperature,
            shape: Shape::None,
        }
    }

    pub fn with_shape(mut self, shape: Shape) -> Self {
        self.shape = shape;
        self
    }

    pub fn features(&self) -> [f64; 3] {
        [self.depth, self.position, self.temperature]
    }
}

#[derive(Debug, Error)]
pub enum OpticsError {
    #[error("invalid material configuration: {0}")]
    InvalidConfig(String),
    #[error("{quantity} = {value} outside configured bounds [{min}, {max}]")]
    OutOfBounds {
        quantity: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("image dimensions differ: {a:?} vs {b:?}")]
    ShapeMismatch { a: (usize, usize), b: (usize, usize) },
    #[error("degenerate input: {0}")]
    Degenerate(&'static str),
    #[error("calibration did not reach its targets; best gain {best_gain}, achieved {achieved:?}")]
    Calibration {
        best_gain: f64,
        /// (target, measured) per calibration target.
        achieved: Vec<(f64, f64)>,
    },
    #[error("invalid calibration targets: {0}")]
    InvalidTargets(String),
    #[error("PGM: {0}")]
    Pgm(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Kv(#[from] crate::kv::KvError),
}
