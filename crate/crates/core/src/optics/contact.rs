//! Surface displacement under a rigid indenter.
//!
//! The cylinder uses the flat-punch profile: uniform displacement under
//! the punch, `(2/π)·asin(a/r)` decay outside. Square and triangular
//! punches of the same cross-section area use a Gaussian-blurred
//! footprint (σ = a/2) normalized to peak at the commanded depth.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use super::field::MaterialField;
use super::Shape;

/// Simpson panels across the triangle height.
const TRIANGLE_PANELS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Indenter {
    pub shape: Shape,
    /// Contact center in material-plane mm.
    pub center_mm: (f64, f64),
    /// Radius of the equal-area circle in mm.
    pub radius_mm: f64,
}

impl Indenter {
    /// Indenter of the material's configured radius, offset from the spot
    /// center by `position_um` along the vertical axis.
    pub fn at_position(field: &MaterialField, position_um: f64, shape: Shape) -> Self {
        Self {
            shape,
            center_mm: (0.0, position_um * 1e-3),
            radius_mm: field.config().indenter_radius_mm,
        }
    }

    fn sigma(&self) -> f64 {
        self.radius_mm / 2.0
    }

    fn square_side(&self) -> f64 {
        self.radius_mm * PI.sqrt()
    }

    fn triangle_side(&self) -> f64 {
        (4.0 * PI * self.radius_mm * self.radius_mm / 3f64.sqrt()).sqrt()
    }

    /// Distance beyond which a blurred footprint is treated as zero.
    fn support_radius(&self) -> f64 {
        let circumradius = match self.shape {
            Shape::Square => self.square_side() * FRAC_1_SQRT_2,
            Shape::Triangle => self.triangle_side() / 3f64.sqrt(),
            Shape::Circle | Shape::None => return f64::INFINITY,
        };
        circumradius + 6.0 * self.sigma()
    }

    /// Displacement in µm at material point `(x, y)` mm for `depth` µm.
    pub fn displacement(&self, point: (f64, f64), depth: f64) -> f64 {
        if depth == 0.0 {
            return 0.0;
        }
        let dx = point.0 - self.center_mm.0;
        let dy = point.1 - self.center_mm.1;
        match self.shape {
            Shape::Circle | Shape::None => depth * flat_punch(dx.hypot(dy), self.radius_mm),
            Shape::Square | Shape::Triangle => {
                if dx.hypot(dy) > self.support_radius() {
                    return 0.0;
                }
                depth * self.footprint(dx, dy) / self.footprint(0.0, 0.0)
            }
        }
    }

    /// Gaussian-blurred indicator of the footprint at offset (dx, dy).
    fn footprint(&self, dx: f64, dy: f64) -> f64 {
        let s = self.sigma();
        match self.shape {
            Shape::Square => {
                let half = self.square_side() / 2.0;
                box_blur_1d(dx, half, s) * box_blur_1d(dy, half, s)
            }
            Shape::Triangle => {
                // equilateral, centroid at the origin, apex along +y
                let side = self.triangle_side();
                let height = side * 3f64.sqrt() / 2.0;
                let (y0, y1) = (-height / 3.0, 2.0 * height / 3.0);
                let panel = (y1 - y0) / TRIANGLE_PANELS as f64;
                let slice = |eta: f64| {
                    let half_width = (side / 2.0) * (y1 - eta) / height;
                    gaussian_pdf(dy - eta, s) * box_blur_1d(dx, half_width, s)
                };
                let mut acc = slice(y0) + slice(y1);
                for k in 1..TRIANGLE_PANELS {
                    let w = if k % 2 == 1 { 4.0 } else { 2.0 };
                    acc += w * slice(y0 + k as f64 * panel);
                }
                acc * panel / 3.0
            }
            Shape::Circle | Shape::None => flat_punch(dx.hypot(dy), self.radius_mm),
        }
    }

    /// Displacement over every grid cell, row-major.
    pub fn displacement_map(&self, field: &MaterialField, depth: f64) -> Vec<f64> {
        let n = field.grid_size();
        let mut out = vec![0.0; n * n];
        if depth == 0.0 {
            return out;
        }
        let peak = self.footprint(0.0, 0.0);
        for r in 0..n {
            for c in 0..n {
                let (x, y) = field.cell_mm(r, c);
                out[r * n + c] = match self.shape {
                    Shape::Circle | Shape::None => self.displacement((x, y), depth),
                    _ => {
                        let (dx, dy) = (x - self.center_mm.0, y - self.center_mm.1);
                        if dx.hypot(dy) > self.support_radius() {
                            0.0
                        } else {
                            depth * self.footprint(dx, dy) / peak
                        }
                    }
                };
            }
        }
        out
    }
}

/// Normalized flat-punch profile: 1 under the punch, `(2/π)·asin(a/r)` outside.
fn flat_punch(r: f64, a: f64) -> f64 {
    if r <= a {
        1.0
    } else {
        (2.0 / PI) * (a / r).asin()
    }
}

/// Indicator of `[-half, half]` convolved with a unit Gaussian of width `s`.
fn box_blur_1d(x: f64, half: f64, s: f64) -> f64 {
    let k = FRAC_1_SQRT_2 / s;
    0.5 * (libm::erf((x + half) * k) - libm::erf((x - half) * k))
}

fn gaussian_pdf(x: f64, s: f64) -> f64 {
    (-(x * x) / (2.0 * s * s)).exp() / (s * (2.0 * PI).sqrt())
}

/// Displacement in µm at material point `point` (mm) for a contact at
/// `position` µm along the vertical axis.
pub fn surface_displacement(
    field: &MaterialField,
    point: (f64, f64),
    depth: f64,
    position: f64,
    shape: Shape,
) -> f64 {
    Indenter::at_position(field, position, shape).displacement(point, depth)
}
