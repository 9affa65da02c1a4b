//! Box-average downsampling, center crop and per-image standardization.

use super::DatasetError;
use crate::optics::SpeckleImage;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preprocess {
    /// Output/input size ratio; the pooling kernel is `round(1/fraction)`.
    pub fraction: f64,
    pub crop: usize,
}

impl Default for Preprocess {
    fn default() -> Self {
        Self {
            fraction: 0.3,
            crop: 64,
        }
    }
}

impl Preprocess {
    pub fn kernel(&self) -> usize {
        (1.0 / self.fraction).round().max(1.0) as usize
    }

    /// Side length after pooling an image of `side` pixels.
    pub fn pooled_side(&self, side: usize) -> usize {
        side / self.kernel()
    }
}

/// Returns a `crop`×`crop` row-major array with zero mean and unit variance.
pub fn preprocess(image: &SpeckleImage, params: &Preprocess) -> Result<Vec<f64>, DatasetError> {
    if !(params.fraction > 0.0 && params.fraction <= 1.0) {
        return Err(DatasetError::InvalidPreprocess(format!(
            "fraction {} not in (0, 1]",
            params.fraction
        )));
    }
    if params.crop == 0 {
        return Err(DatasetError::InvalidPreprocess("crop must be positive".into()));
    }
    let k = params.kernel();
    let (pw, ph) = (image.width / k, image.height / k);
    if params.crop > pw || params.crop > ph {
        return Err(DatasetError::CropTooLarge {
            crop: params.crop,
            size: pw.min(ph),
        });
    }
    let values = image.values();
    let (ox, oy) = ((pw - params.crop) / 2, (ph - params.crop) / 2);
    let inv = 1.0 / (k * k) as f64;
    let mut out = Vec::with_capacity(params.crop * params.crop);
    for r in 0..params.crop {
        for c in 0..params.crop {
            let (r0, c0) = ((r + oy) * k, (c + ox) * k);
            let mut acc = 0.0;
            for dr in 0..k {
                let row = &values[(r0 + dr) * image.width + c0..][..k];
                acc += row.iter().sum::<f64>();
            }
            out.push(acc * inv);
        }
    }
    standardize(&mut out)?;
    Ok(out)
}

fn standardize(values: &mut [f64]) -> Result<(), DatasetError> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if !(var > 0.0) {
        return Err(DatasetError::ZeroVariance);
    }
    let inv = 1.0 / var.sqrt();
    for v in values.iter_mut() {
        *v = (*v - mean) * inv;
    }
    Ok(())
}
