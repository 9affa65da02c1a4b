//! Rendering a sweep into a preprocessed dataset.

use rand::Rng;
use rayon::prelude::*;

use super::preprocess::{preprocess, Preprocess};
use super::protocol::{sweep_grid, SweepProtocol};
use super::{Dataset, DatasetError, Sample};
use crate::kv::{self, KvMap};
use crate::optics::render::{check_bounds, render_scene, Scene};
use crate::optics::{MaterialField, NoiseConfig, SpeckleImage, StimulusVector};
use crate::seed;

/// Slow environmental drift: an extra phase `rate·days·h₂(u)` with a fixed
/// smooth field `h₂`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftConfig {
    pub days: f64,
    /// Radians per day.
    pub rate: f64,
}

impl DriftConfig {
    /// Rate giving a day-30 self-correlation of about 0.9.
    pub const DEFAULT_RATE: f64 = 0.0145;

    pub fn none() -> Self {
        Self {
            days: 0.0,
            rate: Self::DEFAULT_RATE,
        }
    }

    pub fn days(days: f64) -> Self {
        Self {
            days,
            rate: Self::DEFAULT_RATE,
        }
    }

    pub fn phase(&self) -> f64 {
        self.rate * self.days
    }
}

impl Default for DriftConfig {
    fn default() -> Self {
        Self::none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateOptions {
    pub creation_seed: u64,
    pub noise: NoiseConfig,
    pub drift: DriftConfig,
    pub preprocess: Preprocess,
    /// Uniform jitter half-widths applied to commanded depth (µm) and
    /// temperature (°C).
    pub depth_jitter: f64,
    pub temperature_jitter: f64,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        Self {
            creation_seed: 0,
            noise: NoiseConfig::default(),
            drift: DriftConfig::none(),
            preprocess: Preprocess::default(),
            depth_jitter: 0.5,
            temperature_jitter: 0.2,
        }
    }
}

impl GenerateOptions {
    pub fn to_kv(&self) -> KvMap {
        let mut kv = KvMap::new();
        kv.set("creation_seed", self.creation_seed);
        kv.extend_section("noise", &self.noise.to_kv());
        kv.set("drift.days", kv::float(self.drift.days));
        kv.set("drift.rate", kv::float(self.drift.rate));
        kv.set("preprocess.fraction", kv::float(self.preprocess.fraction));
        kv.set("preprocess.crop", self.preprocess.crop);
        kv.set("depth_jitter", kv::float(self.depth_jitter));
        kv.set("temperature_jitter", kv::float(self.temperature_jitter));
        kv
    }
}

/// Jitter and render a single commanded stimulus to a camera frame,
/// returning the ground-truth stimulus alongside.
pub fn render_raw(
    field: &MaterialField,
    commanded: &StimulusVector,
    index: usize,
    options: &GenerateOptions,
) -> Result<(StimulusVector, SpeckleImage), DatasetError> {
    let sample_seed = seed::mix(options.creation_seed, index as u64);
    let mut rng = seed::rng(sample_seed, 2);
    let mut raw = *commanded;
    if options.depth_jitter > 0.0 {
        raw.depth += rng.random_range(-options.depth_jitter..=options.depth_jitter);
        raw.depth = raw.depth.max(0.0);
    }
    if options.temperature_jitter > 0.0 {
        raw.temperature += rng.random_range(-options.temperature_jitter..=options.temperature_jitter);
    }
    check_bounds(field, &raw)?;
    let scene = Scene::from_stimulus(field, &raw).with_drift(options.drift.phase());
    let noise = options.noise.with_seed(seed::mix(sample_seed, 1));
    Ok((raw, render_scene(field, &scene, &noise)))
}

/// Render, jitter and preprocess a single commanded stimulus. The result
/// depends only on `(field, commanded, index, options)`.
pub fn render_sample(
    field: &MaterialField,
    commanded: &StimulusVector,
    index: usize,
    options: &GenerateOptions,
) -> Result<Sample, DatasetError> {
    let (raw, image) = render_raw(field, commanded, index, options)?;
    let processed = preprocess(&image, &options.preprocess)?;
    Ok(Sample {
        image: processed.into_iter().map(|v| v as f32).collect(),
        raw,
    })
}

/// Render an explicit list of commanded stimuli. Samples are generated in
/// parallel and assembled in list order.
pub fn generate_from_stimuli(
    field: &MaterialField,
    stimuli: &[StimulusVector],
    options: &GenerateOptions,
    metadata: KvMap,
) -> Result<Dataset, DatasetError> {
    if stimuli.is_empty() {
        return Err(DatasetError::Empty);
    }
    let samples = stimuli
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            render_sample(field, x, i, options).map_err(|e| DatasetError::Sample {
                index: i,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut meta = metadata;
    meta.merge(&options.to_kv());
    meta.set("material_seed", field.config().seed);
    meta.set("deform_gain", kv::float(field.config().deform_gain));
    meta.set("thermal_gain", kv::float(field.config().thermal_gain));
    meta.set("sensitivity_mode", field.config().sensitivity_mode);
    Ok(Dataset {
        image_side: options.preprocess.crop,
        samples,
        creation_seed: options.creation_seed,
        metadata: meta.to_text(),
    })
}

pub fn generate_dataset(
    field: &MaterialField,
    protocol: &SweepProtocol,
    options: &GenerateOptions,
) -> Result<Dataset, DatasetError> {
    let grid = sweep_grid(protocol)?;
    let mut meta = KvMap::new();
    meta.extend_section("protocol", &protocol.to_kv());
    generate_from_stimuli(field, &grid, options, meta)
}
