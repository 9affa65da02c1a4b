//! Indentation force as a fourth-order polynomial of depth.

/// Lower and upper depth (µm) of the default fit.
pub const DEFAULT_FIT_RANGE: (f64, f64) = (0.0, 212.0);

/// Fit of [`synthetic_loading_curve`] over [`DEFAULT_FIT_RANGE`] at 1 µm
/// spacing, constrained through the origin. Coefficients of depth⁰..depth⁴.
pub const DEFAULT_FORCE_COEFFS: [f64; 5] = [
    0.0,
    0.002550019662648936,
    1.215762800639356e-05,
    1.160537875160776e-08,
    1.5134387624812144e-10,
];

/// Stiffening loading curve, 0 N at 0 µm to 1.2 N at 190 µm.
pub fn synthetic_loading_curve(depth: f64) -> f64 {
    const SCALE_UM: f64 = 120.0;
    1.2 * ((depth / SCALE_UM).exp() - 1.0) / ((190.0 / SCALE_UM).exp() - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForceEstimate {
    pub newtons: f64,
    /// Depth was outside the fitted range.
    pub extrapolated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForceCurve {
    pub coeffs: [f64; 5],
    pub range: (f64, f64),
}

impl Default for ForceCurve {
    fn default() -> Self {
        Self {
            coeffs: DEFAULT_FORCE_COEFFS,
            range: DEFAULT_FIT_RANGE,
        }
    }
}

impl ForceCurve {
    pub fn eval(&self, depth: f64) -> ForceEstimate {
        let newtons = self.coeffs.iter().rev().fold(0.0, |acc, c| acc * depth + c);
        ForceEstimate {
            newtons,
            extrapolated: depth < self.range.0 || depth > self.range.1,
        }
    }

    /// Least-squares quartic through the origin.
    ///
    /// Solved in the normalized variable `t = depth / max|depth|` to keep the
    /// normal equations well conditioned.
    pub fn fit(depths: &[f64], forces: &[f64]) -> Option<ForceCurve> {
        if depths.len() != forces.len() || depths.len() < 4 {
            return None;
        }
        let scale = depths.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        if scale == 0.0 {
            return None;
        }
        let mut ata = [[0.0f64; 4]; 4];
        let mut atb = [0.0f64; 4];
        for (&d, &f) in depths.iter().zip(forces) {
            let t = d / scale;
            let row = [t, t * t, t * t * t, t * t * t * t];
            for i in 0..4 {
                atb[i] += row[i] * f;
                for j in 0..4 {
                    ata[i][j] += row[i] * row[j];
                }
            }
        }
        let sol = solve4(ata, atb)?;
        let mut coeffs = [0.0; 5];
        for k in 1..5 {
            coeffs[k] = sol[k - 1] / scale.powi(k as i32);
        }
        let lo = depths.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = depths.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Some(ForceCurve {
            coeffs,
            range: (lo, hi),
        })
    }

    pub fn rmse(&self, depths: &[f64], forces: &[f64]) -> f64 {
        let sse: f64 = depths
            .iter()
            .zip(forces)
            .map(|(&d, &f)| (self.eval(d).newtons - f).powi(2))
            .sum();
        (sse / depths.len() as f64).sqrt()
    }
}

fn solve4(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> Option<[f64; 4]> {
    for col in 0..4 {
        let pivot = (col..4).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..4 {
            let f = a[row][col] / a[col][col];
            for k in col..4 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 4];
    for row in (0..4).rev() {
        let s: f64 = (row + 1..4).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Force in newtons for `depth` µm using `coeffs` fitted over `range`.
pub fn force_from_depth(depth: f64, coeffs: &[f64; 5], range: (f64, f64)) -> ForceEstimate {
    ForceCurve {
        coeffs: *coeffs,
        range,
    }
    .eval(depth)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> (Vec<f64>, Vec<f64>) {
        let d: Vec<f64> = (0..=212).map(f64::from).collect();
        let f = d.iter().map(|&x| synthetic_loading_curve(x)).collect();
        (d, f)
    }

    #[test]
    fn unloaded_is_zero() {
        let e = ForceCurve::default().eval(0.0);
        assert_eq!(e.newtons, 0.0);
        assert!(!e.extrapolated);
    }

    #[test]
    fn anchor_at_190_um() {
        let e = ForceCurve::default().eval(190.0);
        assert!((e.newtons - 1.2).abs() < 0.05, "{}", e.newtons);
    }

    #[test]
    fn monotone_over_fitted_range() {
        let curve = ForceCurve::default();
        let mut prev = curve.eval(0.0).newtons;
        for i in 1..=2120 {
            let f = curve.eval(i as f64 * 0.1).newtons;
            assert!(f > prev);
            prev = f;
        }
    }

    #[test]
    fn extrapolation_is_flagged() {
        let curve = ForceCurve::default();
        assert!(curve.eval(250.0).extrapolated);
        assert!(curve.eval(-1.0).extrapolated);
        assert!(!curve.eval(212.0).extrapolated);
    }

    #[test]
    fn defaults_reproduce_the_fit() {
        let (d, f) = grid();
        let fit = ForceCurve::fit(&d, &f).unwrap();
        for (a, b) in fit.coeffs.iter().zip(DEFAULT_FORCE_COEFFS) {
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1e-300));
        }
        assert_eq!(fit.range, DEFAULT_FIT_RANGE);
        // well inside the experimental fit quality (0.0016 N)
        assert!(fit.rmse(&d, &f) < 0.0016);
    }

    #[test]
    fn fit_recovers_exact_quartic() {
        let truth = [0.0, 1e-3, -2e-6, 3e-9, 4e-12];
        let d: Vec<f64> = (0..50).map(|i| i as f64 * 5.0).collect();
        let f: Vec<f64> = d
            .iter()
            .map(|&x| force_from_depth(x, &truth, (0.0, 250.0)).newtons)
            .collect();
        let fit = ForceCurve::fit(&d, &f).unwrap();
        for (a, b) in fit.coeffs.iter().zip(truth) {
            assert!((a - b).abs() <= 1e-8 * b.abs().max(1e-12));
        }
    }
}
