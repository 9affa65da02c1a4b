//! Far-field speckle rendering.
//!
//! The complex field `E(u) = A(u)·exp(iφ(u))` is propagated with an
//! unnormalized forward 2-D DFT and the zero frequency is shifted to the
//! image center. With this convention Parseval reads
//! `Σ|DFT(E)|² = n²·Σ|A|²` for an `n`×`n` grid.

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::contact::Indenter;
use super::field::MaterialField;
use super::{OpticsError, StimulusVector};
use crate::kv::{self, KvMap};
use crate::seed;

const TAG_NOISE: u64 = 0x4e4f_4953;

/// Camera and laser noise model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    /// σ of the multiplicative lognormal laser noise.
    pub laser_sigma: f64,
    /// σ of the additive read noise, in quantization levels.
    pub read_sigma: f64,
    /// Intensity percentile mapped to `exposure_target`.
    pub exposure_percentile: f64,
    pub exposure_target: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            laser_sigma: 0.01,
            read_sigma: 0.5,
            exposure_percentile: 0.99,
            exposure_target: 230.0,
            seed: 0,
        }
    }
}

impl NoiseConfig {
    /// Exposure and quantization only.
    pub fn noiseless() -> Self {
        Self {
            laser_sigma: 0.0,
            read_sigma: 0.0,
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn to_kv(&self) -> KvMap {
        let mut kv = KvMap::new();
        kv.set("laser_sigma", kv::float(self.laser_sigma));
        kv.set("read_sigma", kv::float(self.read_sigma));
        kv.set("exposure_percentile", kv::float(self.exposure_percentile));
        kv.set("exposure_target", kv::float(self.exposure_target));
        kv
    }

    pub fn from_kv(kv: &KvMap) -> Result<Self, OpticsError> {
        kv.check_keys(&[
            "laser_sigma",
            "read_sigma",
            "exposure_percentile",
            "exposure_target",
        ])?;
        let mut n = Self::default();
        kv.update("laser_sigma", &mut n.laser_sigma)?;
        kv.update("read_sigma", &mut n.read_sigma)?;
        kv.update("exposure_percentile", &mut n.exposure_percentile)?;
        kv.update("exposure_target", &mut n.exposure_target)?;
        if !(n.laser_sigma >= 0.0 && n.read_sigma >= 0.0) {
            return Err(OpticsError::InvalidConfig("noise sigmas must be non-negative".into()));
        }
        if !(n.exposure_percentile > 0.0 && n.exposure_percentile <= 1.0) {
            return Err(OpticsError::InvalidConfig("exposure percentile must be in (0, 1]".into()));
        }
        Ok(n)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Pixels {
    /// Non-negative pre-quantization intensities.
    Intensity(Vec<f64>),
    Quantized(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeckleImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Pixels,
    pub noise_seed: u64,
    pub exposure_scale: f64,
}

impl SpeckleImage {
    pub fn from_intensity(width: usize, height: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), width * height);
        Self {
            width,
            height,
            pixels: Pixels::Intensity(values),
            noise_seed: 0,
            exposure_scale: 1.0,
        }
    }

    pub fn from_quantized(width: usize, height: usize, values: Vec<u8>) -> Self {
        assert_eq!(values.len(), width * height);
        Self {
            width,
            height,
            pixels: Pixels::Quantized(values),
            noise_seed: 0,
            exposure_scale: 1.0,
        }
    }

    pub fn values(&self) -> Vec<f64> {
        match &self.pixels {
            Pixels::Intensity(v) => v.clone(),
            Pixels::Quantized(v) => v.iter().map(|&b| f64::from(b)).collect(),
        }
    }

    pub fn quantized(&self) -> Option<&[u8]> {
        match &self.pixels {
            Pixels::Quantized(v) => Some(v),
            Pixels::Intensity(_) => None,
        }
    }
}

/// Everything that perturbs the phase screen for one exposure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scene {
    pub indenter: Indenter,
    pub depth: f64,
    pub temperature: f64,
    /// Amplitude in radians of the slow drift field.
    pub drift_phase: f64,
}

impl Scene {
    pub fn from_stimulus(field: &MaterialField, x: &StimulusVector) -> Self {
        Self {
            indenter: Indenter::at_position(field, x.position, x.shape),
            depth: x.depth,
            temperature: x.temperature,
            drift_phase: 0.0,
        }
    }

    pub fn with_drift(mut self, drift_phase: f64) -> Self {
        self.drift_phase = drift_phase;
        self
    }
}

pub(crate) fn check_bounds(field: &MaterialField, x: &StimulusVector) -> Result<(), OpticsError> {
    let c = field.config();
    let half_extent_um = c.extent_mm * 500.0;
    let checks = [
        ("depth", x.depth, 0.0, c.max_depth_um),
        ("position", x.position, -half_extent_um, half_extent_um),
        ("temperature", x.temperature, c.temperature_min, c.temperature_max),
    ];
    for (quantity, value, min, max) in checks {
        if !(value >= min && value <= max) {
            return Err(OpticsError::OutOfBounds {
                quantity,
                value,
                min,
                max,
            });
        }
    }
    Ok(())
}

/// Total phase φ(u) for a scene.
pub fn phase_screen(field: &MaterialField, scene: &Scene) -> Vec<f64> {
    let c = field.config();
    let kd = c.effective_deform_gain();
    let thermal = c.thermal_gain * (scene.temperature - c.thermal_ref);
    let displacement = scene.indenter.displacement_map(field, scene.depth);
    let mut phase = field.base_phase().to_vec();
    for (i, p) in phase.iter_mut().enumerate() {
        *p += kd * displacement[i] + thermal * field.thermal_field()[i];
    }
    if scene.drift_phase != 0.0 {
        for (p, h) in phase.iter_mut().zip(field.drift_field()) {
            *p += scene.drift_phase * h;
        }
    }
    phase
}

/// `|DFT(A·exp(iφ))|²` with the zero frequency at the center.
pub fn far_field_intensity(field: &MaterialField, phase: &[f64]) -> Vec<f64> {
    let n = field.grid_size();
    let mut buf: Vec<Complex64> = field
        .aperture()
        .iter()
        .zip(phase)
        .map(|(&a, &p)| Complex64::from_polar(a, p))
        .collect();
    fft2(&mut buf, n);
    let half = n / 2;
    let mut out = vec![0.0; n * n];
    for r in 0..n {
        for c in 0..n {
            out[((r + half) % n) * n + (c + half) % n] = buf[r * n + c].norm_sqr();
        }
    }
    out
}

fn fft2(buf: &mut [Complex64], n: usize) {
    let fft = FftPlanner::new().plan_fft_forward(n);
    fft.process(buf);
    transpose(buf, n);
    fft.process(buf);
    transpose(buf, n);
}

fn transpose(buf: &mut [Complex64], n: usize) {
    for r in 0..n {
        for c in r + 1..n {
            buf.swap(r * n + c, c * n + r);
        }
    }
}

/// Pre-noise intensity image of a scene.
pub fn render_intensity(field: &MaterialField, scene: &Scene) -> SpeckleImage {
    let n = field.grid_size();
    let phase = phase_screen(field, scene);
    SpeckleImage::from_intensity(n, n, far_field_intensity(field, &phase))
}

/// Apply laser noise, exposure, read noise and 8-bit quantization.
pub fn capture(intensity: &[f64], width: usize, height: usize, noise: &NoiseConfig) -> SpeckleImage {
    let mut rng = seed::rng(noise.seed, TAG_NOISE);
    let mut values: Vec<f64> = intensity.to_vec();
    if noise.laser_sigma > 0.0 {
        for v in &mut values {
            let z: f64 = rng.sample(StandardNormal);
            *v *= (noise.laser_sigma * z).exp();
        }
    }
    let level = percentile(&values, noise.exposure_percentile);
    let exposure_scale = if level > 0.0 {
        noise.exposure_target / level
    } else {
        1.0
    };
    let quantized = values
        .iter()
        .map(|&v| {
            let mut q = v * exposure_scale;
            if noise.read_sigma > 0.0 {
                let z: f64 = rng.sample(StandardNormal);
                q += noise.read_sigma * z;
            }
            q.round().clamp(0.0, 255.0) as u8
        })
        .collect();
    SpeckleImage {
        width,
        height,
        pixels: Pixels::Quantized(quantized),
        noise_seed: noise.seed,
        exposure_scale,
    }
}

fn percentile(values: &[f64], p: f64) -> f64 {
    let mut scratch = values.to_vec();
    let k = ((values.len() - 1) as f64 * p).floor() as usize;
    let (_, v, _) = scratch.select_nth_unstable_by(k, f64::total_cmp);
    *v
}

pub fn render_scene(field: &MaterialField, scene: &Scene, noise: &NoiseConfig) -> SpeckleImage {
    let n = field.grid_size();
    let phase = phase_screen(field, scene);
    capture(&far_field_intensity(field, &phase), n, n, noise)
}

/// Render the 8-bit camera image for stimulus `x`.
pub fn render_speckle(
    field: &MaterialField,
    x: &StimulusVector,
    noise: &NoiseConfig,
) -> Result<SpeckleImage, OpticsError> {
    check_bounds(field, x)?;
    Ok(render_scene(field, &Scene::from_stimulus(field, x), noise))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::{build_material, speckle_correlation, MaterialConfig};

    fn field(n: usize) -> MaterialField {
        build_material(&MaterialConfig {
            grid_size: n,
            ..Default::default()
        })
        .unwrap()
    }

    /// Direct O(n⁴) DFT used as an independent oracle.
    fn naive_dft_energy(field: &MaterialField, phase: &[f64]) -> Vec<f64> {
        let n = field.grid_size();
        let mut out = vec![0.0; n * n];
        for ky in 0..n {
            for kx in 0..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for y in 0..n {
                    for x in 0..n {
                        let e = Complex64::from_polar(field.aperture()[y * n + x], phase[y * n + x]);
                        let arg = -2.0 * std::f64::consts::PI * ((ky * y + kx * x) as f64) / n as f64;
                        acc += e * Complex64::from_polar(1.0, arg);
                    }
                }
                out[((ky + n / 2) % n) * n + (kx + n / 2) % n] = acc.norm_sqr();
            }
        }
        out
    }

    #[test]
    fn fft_matches_direct_dft() {
        let f = field(16);
        let x = StimulusVector::new(150.0, 300.0, 23.0);
        let phase = phase_screen(&f, &Scene::from_stimulus(&f, &x));
        let fast = far_field_intensity(&f, &phase);
        let slow = naive_dft_energy(&f, &phase);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
        }
    }

    #[test]
    fn parseval_energy_on_small_grid() {
        let f = field(16);
        let x = StimulusVector::new(120.0, 0.0, 22.5);
        let img = render_intensity(&f, &Scene::from_stimulus(&f, &x));
        let image_energy: f64 = img.values().iter().sum();
        let aperture_energy: f64 = f.aperture().iter().map(|a| a * a).sum();
        let expected = 256.0 * aperture_energy;
        assert!((image_energy - expected).abs() / expected < 1e-10);
    }

    #[test]
    fn render_is_deterministic() {
        let f = field(64);
        let x = StimulusVector::new(150.0, 200.0, 22.0);
        let noise = NoiseConfig::default().with_seed(9);
        let a = render_speckle(&f, &x, &noise).unwrap();
        let b = render_speckle(&f, &x, &noise).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn out_of_bounds_temperature_is_rejected() {
        let f = field(32);
        let x = StimulusVector::new(150.0, 0.0, 99.0);
        assert!(matches!(
            render_speckle(&f, &x, &NoiseConfig::default()),
            Err(OpticsError::OutOfBounds { quantity: "temperature", .. })
        ));
        let neg = StimulusVector::new(-1.0, 0.0, 22.0);
        assert!(render_speckle(&f, &neg, &NoiseConfig::default()).is_err());
    }

    #[test]
    fn exposure_maps_percentile_near_target() {
        let f = field(64);
        let img = render_speckle(&f, &StimulusVector::new(150.0, 0.0, 22.0), &NoiseConfig::noiseless()).unwrap();
        let mut v: Vec<u8> = img.quantized().unwrap().to_vec();
        v.sort_unstable();
        let p99 = v[((v.len() - 1) as f64 * 0.99) as usize];
        assert!((229..=231).contains(&p99));
    }

    #[test]
    fn drift_decorrelates_gradually() {
        let f = field(64);
        let x = StimulusVector::new(150.0, 0.0, 22.0);
        let base = Scene::from_stimulus(&f, &x);
        let noise = NoiseConfig::noiseless();
        let i0 = render_scene(&f, &base, &noise);
        let small = render_scene(&f, &base.with_drift(0.2), &noise);
        let large = render_scene(&f, &base.with_drift(1.0), &noise);
        let c_small = speckle_correlation(&i0, &small).unwrap();
        let c_large = speckle_correlation(&i0, &large).unwrap();
        assert!(c_small < 1.0 && c_large < c_small);
    }
}
