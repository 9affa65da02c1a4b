use super::DatasetError;
use crate::kv::{self, KvMap};
use crate::optics::{Shape, StimulusVector};

/// Evenly spaced values `start, start + step, …` (`count` of them).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisSweep {
    pub start: f64,
    pub step: f64,
    pub count: usize,
}

impl AxisSweep {
    pub const fn new(start: f64, step: f64, count: usize) -> Self {
        Self { start, step, count }
    }

    pub fn value(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }

    pub fn last(&self) -> f64 {
        self.value(self.count.saturating_sub(1))
    }

    /// Grid shifted by half a step with one point fewer: the midpoints.
    pub fn midpoints(&self) -> AxisSweep {
        AxisSweep::new(self.start + 0.5 * self.step, self.step, self.count.saturating_sub(1).max(1))
    }

    fn to_text(self) -> String {
        format!("{}, {}, {}", kv::float(self.start), kv::float(self.step), self.count)
    }

    fn parse(text: &str) -> Option<Self> {
        let parts: Vec<&str> = text.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return None;
        }
        Some(Self::new(
            parts[0].parse().ok()?,
            parts[1].parse().ok()?,
            parts[2].parse().ok()?,
        ))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepProtocol {
    pub depth: AxisSweep,
    pub position: AxisSweep,
    pub temperature: AxisSweep,
    pub repeats: usize,
    /// Indenter shapes swept as the outermost loop; empty means the
    /// default cylinder only.
    pub shapes: Vec<Shape>,
}

impl Default for SweepProtocol {
    /// Full laboratory protocol: 8 × 8 × 40 states, six sequential sweeps.
    fn default() -> Self {
        Self {
            depth: AxisSweep::new(100.0, 16.0, 8),
            position: AxisSweep::new(0.0, 160.0, 8),
            temperature: AxisSweep::new(17.9, 0.2, 40),
            repeats: 6,
            shapes: Vec::new(),
        }
    }
}

impl SweepProtocol {
    /// Reduced 6 × 6 × 10 grid with three repeats. Depth and position steps
    /// sit at the calibrated 0.61 / 0.66 correlation spacings, and the
    /// temperature grid straddles the thermal reference so that a
    /// half-interval test at the reference interpolates.
    pub fn desk() -> Self {
        Self {
            depth: AxisSweep::new(100.0, 12.0, 6),
            position: AxisSweep::new(0.0, 120.0, 6),
            temperature: AxisSweep::new(21.1, 0.2, 10),
            repeats: 3,
            shapes: Vec::new(),
        }
    }

    /// Number of distinct commanded states in one sweep.
    pub fn states(&self) -> usize {
        self.depth.count * self.position.count * self.temperature.count * self.shapes.len().max(1)
    }

    pub fn len(&self) -> usize {
        self.states() * self.repeats
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_kv(&self) -> KvMap {
        let mut kv = KvMap::new();
        kv.set("depth", self.depth.to_text());
        kv.set("position", self.position.to_text());
        kv.set("temperature", self.temperature.to_text());
        kv.set("repeats", self.repeats);
        let shapes: Vec<&str> = self.shapes.iter().map(|s| s.name()).collect();
        kv.set("shapes", shapes.join(", "));
        kv
    }

    pub fn from_kv(kv: &KvMap) -> Result<Self, DatasetError> {
        kv.check_keys(&["depth", "position", "temperature", "repeats", "shapes"])?;
        let mut p = Self::desk();
        let axis = |key: &str, target: &mut AxisSweep| -> Result<(), DatasetError> {
            if let Some(text) = kv.get_str(key) {
                *target = AxisSweep::parse(text).ok_or_else(|| {
                    DatasetError::Kv(crate::kv::KvError::Value {
                        key: key.to_string(),
                        value: text.to_string(),
                    })
                })?;
            }
            Ok(())
        };
        axis("depth", &mut p.depth)?;
        axis("position", &mut p.position)?;
        axis("temperature", &mut p.temperature)?;
        kv.update("repeats", &mut p.repeats)?;
        if let Some(text) = kv.get_str("shapes") {
            p.shapes = text
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse::<Shape>().map_err(|_| {
                        DatasetError::Kv(crate::kv::KvError::Value {
                            key: "shapes".into(),
                            value: text.to_string(),
                        })
                    })
                })
                .collect::<Result<_, _>>()?;
        }
        Ok(p)
    }
}

/// Commanded stimuli: shape, depth, position, temperature nested from
/// outermost to innermost, the whole sweep repeated `repeats` times.
pub fn sweep_grid(protocol: &SweepProtocol) -> Result<Vec<StimulusVector>, DatasetError> {
    for (name, count) in [
        ("depth", protocol.depth.count),
        ("position", protocol.position.count),
        ("temperature", protocol.temperature.count),
        ("repeats", protocol.repeats),
    ] {
        if count == 0 {
            return Err(DatasetError::EmptyProtocol(name));
        }
    }
    let shapes: &[Shape] = if protocol.shapes.is_empty() {
        &[Shape::None]
    } else {
        &protocol.shapes
    };
    let mut out = Vec::with_capacity(protocol.len());
    for _ in 0..protocol.repeats {
        for &shape in shapes {
            for i in 0..protocol.depth.count {
                for j in 0..protocol.position.count {
                    for k in 0..protocol.temperature.count {
                        out.push(
                            StimulusVector::new(
                                protocol.depth.value(i),
                                protocol.position.value(j),
                                protocol.temperature.value(k),
                            )
                            .with_shape(shape),
                        );
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_protocol_sizes() {
        let p = SweepProtocol {
            repeats: 1,
            ..Default::default()
        };
        assert_eq!(sweep_grid(&p).unwrap().len(), 2560);
        assert_eq!(SweepProtocol::default().len(), 15_360);
    }

    #[test]
    fn depth_sweep_ends_at_212() {
        let p = SweepProtocol::default();
        assert_eq!(p.depth.last(), 212.0);
        let grid = sweep_grid(&p).unwrap();
        let max = grid.iter().map(|s| s.depth).fold(0.0, f64::max);
        assert_eq!(max, 212.0);
    }

    #[test]
    fn degenerate_grid_is_the_start_point() {
        let p = SweepProtocol {
            depth: AxisSweep::new(120.0, 16.0, 1),
            position: AxisSweep::new(40.0, 160.0, 1),
            temperature: AxisSweep::new(20.0, 0.2, 1),
            repeats: 1,
            shapes: vec![],
        };
        assert_eq!(sweep_grid(&p).unwrap(), vec![StimulusVector::new(120.0, 40.0, 20.0)]);
    }

    #[test]
    fn zero_count_is_an_error() {
        let mut p = SweepProtocol::desk();
        p.position.count = 0;
        assert!(matches!(sweep_grid(&p), Err(DatasetError::EmptyProtocol("position"))));
    }

    #[test]
    fn row_major_order() {
        let p = SweepProtocol::desk();
        let g = sweep_grid(&p).unwrap();
        assert_eq!(g[1].temperature, p.temperature.value(1));
        assert_eq!(g[1].depth, g[0].depth);
        assert_eq!(g[10].position, p.position.value(1));
        assert_eq!(g[60].depth, p.depth.value(1));
        // second repeat restarts the sweep
        assert_eq!(g[360], g[0]);
    }

    #[test]
    fn shapes_loop_outermost() {
        let mut p = SweepProtocol::desk();
        p.shapes = vec![Shape::Circle, Shape::Square];
        p.repeats = 1;
        let g = sweep_grid(&p).unwrap();
        assert_eq!(g.len(), 720);
        assert_eq!(g[359].shape, Shape::Circle);
        assert_eq!(g[360].shape, Shape::Square);
    }

    #[test]
    fn kv_round_trip() {
        let mut p = SweepProtocol::default();
        p.shapes = vec![Shape::Triangle, Shape::Circle];
        let back = SweepProtocol::from_kv(&KvMap::parse(&p.to_kv().to_text()).unwrap()).unwrap();
        assert_eq!(back, p);
    }
}
