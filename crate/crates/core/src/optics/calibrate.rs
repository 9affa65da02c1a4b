//! Sensitivity calibration against speckle-correlation targets.
//!
//! Correlation decreases monotonically with the phase gain, so each gain
//! is found by bisection (in log space) on the mean signed deviation from
//! the targets that depend on it: depth and position targets tune the
//! deformation gain, temperature targets tune the thermal gain.

use rand::Rng;

use super::config::MaterialConfig;
use super::correlation::speckle_correlation;
use super::field::{build_material, MaterialField};
use super::render::{render_speckle, NoiseConfig};
use super::{OpticsError, StimulusVector};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StimulusAxis {
    Depth,
    Position,
    Temperature,
}

impl std::str::FromStr for StimulusAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "depth" => Ok(Self::Depth),
            "position" => Ok(Self::Position),
            "temperature" => Ok(Self::Temperature),
            other => Err(format!("unknown axis {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationTarget {
    pub axis: StimulusAxis,
    /// Stimulus separation in µm (or °C for temperature).
    pub delta: f64,
    pub correlation: f64,
}

impl CalibrationTarget {
    pub fn new(axis: StimulusAxis, delta: f64, correlation: f64) -> Self {
        Self {
            axis,
            delta,
            correlation,
        }
    }

    /// Depth 12 µm → 0.61, position 120 µm → 0.66, temperature 0.2 °C → 0.85.
    pub fn defaults() -> Vec<CalibrationTarget> {
        vec![
            Self::new(StimulusAxis::Depth, 12.0, 0.61),
            Self::new(StimulusAxis::Position, 120.0, 0.66),
            Self::new(StimulusAxis::Temperature, 0.2, 0.85),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationOptions {
    /// Probe pairs averaged per correlation measurement (at least 8).
    pub probes: usize,
    pub tolerance: f64,
    pub max_steps: usize,
    pub seed: u64,
    pub noise: NoiseConfig,
    pub depth_range: (f64, f64),
    pub position_range: (f64, f64),
    /// Probe temperatures are drawn within ± this of the reference.
    pub temperature_spread: f64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            probes: 8,
            tolerance: 0.1,
            max_steps: 40,
            seed: 0x00C0_FFEE,
            noise: NoiseConfig::default(),
            depth_range: (100.0, 212.0),
            position_range: (0.0, 1120.0),
            temperature_spread: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub config: MaterialConfig,
    /// (target, measured) in the order targets were given.
    pub achieved: Vec<(CalibrationTarget, f64)>,
    pub steps: usize,
}

/// Mean correlation between probe stimuli and the same stimuli displaced
/// by `delta` along `axis`. Probe stimuli and noise seeds depend only on
/// `options.seed`, so repeated measurements on different gains share them.
pub fn measure_correlation(
    field: &MaterialField,
    axis: StimulusAxis,
    delta: f64,
    options: &CalibrationOptions,
) -> Result<f64, OpticsError> {
    let probes = options.probes.max(8);
    let mut rng = seed::rng(options.seed, 0x5052_4f42);
    let t_ref = field.config().thermal_ref;
    let mut total = 0.0;
    for k in 0..probes {
        let base = StimulusVector::new(
            rng.random_range(options.depth_range.0..=options.depth_range.1),
            rng.random_range(options.position_range.0..=options.position_range.1),
            t_ref + rng.random_range(-options.temperature_spread..=options.temperature_spread),
        );
        let mut moved = base;
        match axis {
            StimulusAxis::Depth => moved.depth += delta,
            StimulusAxis::Position => moved.position += delta,
            StimulusAxis::Temperature => moved.temperature += delta,
        }
        let seed_a = seed::mix(options.seed, 2 * k as u64);
        let seed_b = seed::mix(options.seed, 2 * k as u64 + 1);
        let a = render_speckle(field, &base, &options.noise.with_seed(seed_a))?;
        let b = render_speckle(field, &moved, &options.noise.with_seed(seed_b))?;
        total += speckle_correlation(&a, &b)?;
    }
    Ok(total / probes as f64)
}

fn check_monotone(targets: &[CalibrationTarget]) -> Result<(), OpticsError> {
    for t in targets {
        if !(t.delta > 0.0) || !(t.correlation > -1.0 && t.correlation < 1.0) {
            return Err(OpticsError::InvalidTargets(format!("{t:?}")));
        }
    }
    for a in targets {
        for b in targets {
            if a.axis == b.axis && a.delta < b.delta && a.correlation <= b.correlation {
                return Err(OpticsError::InvalidTargets(format!(
                    "correlation must decrease with separation on {:?}",
                    a.axis
                )));
            }
        }
    }
    Ok(())
}

struct Search<'a> {
    field: &'a MaterialField,
    options: &'a CalibrationOptions,
    targets: Vec<CalibrationTarget>,
    thermal: bool,
}

impl Search<'_> {
    fn measure(&self, gain: f64) -> Result<Vec<f64>, OpticsError> {
        let c = self.field.config();
        let f = if self.thermal {
            self.field.with_gains(c.deform_gain, gain)
        } else {
            self.field.with_gains(gain, c.thermal_gain)
        };
        self.targets
            .iter()
            .map(|t| measure_correlation(&f, t.axis, t.delta, self.options))
            .collect()
    }

    fn deviations(&self, measured: &[f64]) -> Vec<f64> {
        measured
            .iter()
            .zip(&self.targets)
            .map(|(m, t)| m - t.correlation)
            .collect()
    }

    /// Returns (best gain, measured at best, steps used).
    fn run(&self, lo: f64, hi: f64) -> Result<(f64, Vec<f64>, usize), OpticsError> {
        let score = |dev: &[f64]| dev.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        let mean = |dev: &[f64]| dev.iter().sum::<f64>() / dev.len() as f64;
        let (mut lo, mut hi) = (lo, hi);
        let mut best: Option<(f64, Vec<f64>, f64)> = None;
        let mut steps = 0;
        while steps < self.options.max_steps {
            steps += 1;
            let mid = (lo * hi).sqrt();
            let measured = self.measure(mid)?;
            let dev = self.deviations(&measured);
            let s = score(&dev);
            if best.as_ref().is_none_or(|b| s < b.2) {
                best = Some((mid, measured, s));
            }
            let m = mean(&dev);
            if m.abs() < 0.005 || hi / lo < 1.0 + 1e-4 {
                break;
            }
            // too correlated means the gain is too small
            if m > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (gain, measured, _) = best.expect("at least one step");
        Ok((gain, measured, steps))
    }
}

/// Tune the deformation and thermal gains of `config` so that measured
/// correlations match `targets` within `options.tolerance`.
pub fn calibrate_sensitivity(
    config: &MaterialConfig,
    targets: &[CalibrationTarget],
    options: &CalibrationOptions,
) -> Result<Calibration, OpticsError> {
    if targets.is_empty() {
        return Ok(Calibration {
            config: config.clone(),
            achieved: Vec::new(),
            steps: 0,
        });
    }
    check_monotone(targets)?;
    let mut field = build_material(config)?;
    let mut achieved = vec![0.0; targets.len()];
    let mut steps = 0;

    for thermal in [false, true] {
        let picked: Vec<usize> = (0..targets.len())
            .filter(|&i| (targets[i].axis == StimulusAxis::Temperature) == thermal)
            .collect();
        if picked.is_empty() {
            continue;
        }
        let search = Search {
            field: &field,
            options,
            targets: picked.iter().map(|&i| targets[i]).collect(),
            thermal,
        };
        let (lo, hi) = if thermal { (1e-3, 1e2) } else { (1e-4, 10.0) };
        let (gain, measured, used) = search.run(lo, hi)?;
        steps += used;
        let c = field.config().clone();
        field = if thermal {
            field.with_gains(c.deform_gain, gain)
        } else {
            field.with_gains(gain, c.thermal_gain)
        };
        for (slot, m) in picked.iter().zip(measured) {
            achieved[*slot] = m;
        }
        let worst = picked
            .iter()
            .map(|&i| (achieved[i] - targets[i].correlation).abs())
            .fold(0.0f64, f64::max);
        if worst > options.tolerance {
            return Err(OpticsError::Calibration {
                best_gain: gain,
                achieved: picked
                    .iter()
                    .map(|&i| (targets[i].correlation, achieved[i]))
                    .collect(),
            });
        }
    }
    Ok(Calibration {
        config: field.config().clone(),
        achieved: targets.iter().cloned().zip(achieved).collect(),
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_targets_are_a_no_op() {
        let c = MaterialConfig::default();
        let cal = calibrate_sensitivity(&c, &[], &CalibrationOptions::default()).unwrap();
        assert_eq!(cal.config, c);
        assert_eq!(cal.steps, 0);
    }

    #[test]
    fn non_monotone_targets_are_rejected() {
        let targets = [
            CalibrationTarget::new(StimulusAxis::Depth, 12.0, 0.4),
            CalibrationTarget::new(StimulusAxis::Depth, 52.0, 0.6),
        ];
        let r = calibrate_sensitivity(
            &MaterialConfig::default(),
            &targets,
            &CalibrationOptions::default(),
        );
        assert!(matches!(r, Err(OpticsError::InvalidTargets(_))));
    }

    #[test]
    fn unreachable_target_reports_best_values() {
        // A tiny grid cannot decorrelate to -0.9 at any gain.
        let config = MaterialConfig {
            grid_size: 32,
            ..Default::default()
        };
        let options = CalibrationOptions {
            max_steps: 6,
            ..Default::default()
        };
        let targets = [CalibrationTarget::new(StimulusAxis::Depth, 12.0, -0.9)];
        match calibrate_sensitivity(&config, &targets, &options) {
            Err(OpticsError::Calibration { achieved, .. }) => {
                assert_eq!(achieved.len(), 1);
                assert_eq!(achieved[0].0, -0.9);
            }
            other => panic!("expected calibration failure, got {other:?}"),
        }
    }
}
