//! The virtual material: a seeded phase screen, the illumination aperture
//! and two smooth random fields (thermal response and slow drift).

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use super::blur::gaussian_blur_periodic;
use super::config::MaterialConfig;
use super::OpticsError;
use crate::seed;

const TAG_PHASE: u64 = 0x5048_4153;
const TAG_THERMAL: u64 = 0x5448_524d;
const TAG_DRIFT: u64 = 0x4452_4654;

/// Immutable once built; safe to share between renderers.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialField {
    config: MaterialConfig,
    base_phase: Vec<f64>,
    aperture: Vec<f64>,
    thermal: Vec<f64>,
    drift: Vec<f64>,
}

pub fn build_material(config: &MaterialConfig) -> Result<MaterialField, OpticsError> {
    config.validate()?;
    let n = config.grid_size;
    let cells = n * n;

    let scale = config.base_phase_scale();
    let mut rng = seed::rng(config.seed, TAG_PHASE);
    let base_phase: Vec<f64> = (0..cells)
        .map(|_| scale * rng.random_range(0.0..2.0 * PI))
        .collect();

    // amplitude exp(-r²/w²) gives a 1/e² intensity radius of w
    let w = config.spot_diameter_mm / 2.0;
    let pitch = config.pixel_mm();
    let mut aperture = Vec::with_capacity(cells);
    for r in 0..n {
        for c in 0..n {
            let x = (c as f64 - (n / 2) as f64) * pitch;
            let y = (r as f64 - (n / 2) as f64) * pitch;
            aperture.push((-(x * x + y * y) / (w * w)).exp());
        }
    }

    let thermal = smooth_unit_field(config, TAG_THERMAL);
    let drift = smooth_unit_field(config, TAG_DRIFT);
    Ok(MaterialField {
        config: config.clone(),
        base_phase,
        aperture,
        thermal,
        drift,
    })
}

/// White noise blurred with σ = grid/16 and standardized to zero mean and
/// unit variance.
fn smooth_unit_field(config: &MaterialConfig, tag: u64) -> Vec<f64> {
    let n = config.grid_size;
    let mut rng = seed::rng(config.seed, tag);
    let noise: Vec<f64> = (0..n * n).map(|_| rng.sample(StandardNormal)).collect();
    let mut field = gaussian_blur_periodic(&noise, n, n as f64 / 16.0);
    let mean = field.iter().sum::<f64>() / field.len() as f64;
    let var = field.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / field.len() as f64;
    let inv = 1.0 / var.sqrt();
    for v in &mut field {
        *v = (*v - mean) * inv;
    }
    field
}

impl MaterialField {
    pub fn config(&self) -> &MaterialConfig {
        &self.config
    }

    pub fn grid_size(&self) -> usize {
        self.config.grid_size
    }

    pub fn base_phase(&self) -> &[f64] {
        &self.base_phase
    }

    pub fn aperture(&self) -> &[f64] {
        &self.aperture
    }

    pub fn thermal_field(&self) -> &[f64] {
        &self.thermal
    }

    pub fn drift_field(&self) -> &[f64] {
        &self.drift
    }

    /// Material-plane coordinates (x, y) in mm of grid cell (row, col);
    /// the illumination spot is centered at the origin.
    pub fn cell_mm(&self, row: usize, col: usize) -> (f64, f64) {
        let half = (self.config.grid_size / 2) as f64;
        let pitch = self.config.pixel_mm();
        ((col as f64 - half) * pitch, (row as f64 - half) * pitch)
    }

    /// Same screens with different phase gains. The random fields depend
    /// only on the seed and geometry, so calibration can reuse them.
    pub fn with_gains(&self, deform_gain: f64, thermal_gain: f64) -> MaterialField {
        let mut out = self.clone();
        out.config.deform_gain = deform_gain;
        out.config.thermal_gain = thermal_gain;
        out
    }
}
