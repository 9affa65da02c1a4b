use super::{OpticsError, SpeckleImage};

/// Pearson correlation of two equally sized sequences.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64, OpticsError> {
    if a.len() != b.len() {
        return Err(OpticsError::ShapeMismatch {
            a: (a.len(), 1),
            b: (b.len(), 1),
        });
    }
    if a.is_empty() {
        return Err(OpticsError::Degenerate("empty input"));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(OpticsError::Degenerate("zero-variance image"));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Speckle correlation `C = ⟨(I−Ī)(I′−Ī′)⟩ / (σσ′)` over all pixels.
pub fn speckle_correlation(a: &SpeckleImage, b: &SpeckleImage) -> Result<f64, OpticsError> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(OpticsError::ShapeMismatch {
            a: (a.width, a.height),
            b: (b.width, b.height),
        });
    }
    pearson(&a.values(), &b.values())
}
