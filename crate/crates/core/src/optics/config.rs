//! Material configuration and its key-value serialization.

use std::str::FromStr;

use super::OpticsError;
use crate::kv::{self, KvMap};

/// Reduced-sensitivity scale factors applied in [`SensitivityMode::Interface`].
pub const INTERFACE_DEFORM_SCALE: f64 = 0.05;
pub const INTERFACE_PHASE_SCALE: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SensitivityMode {
    #[default]
    Full,
    /// Weak scattering: deformation gain and base phase amplitude are
    /// scaled down so that only coarse touches decorrelate the pattern.
    Interface,
}

impl FromStr for SensitivityMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "full" => Ok(Self::Full),
            "interface" => Ok(Self::Interface),
            other => Err(format!("unknown sensitivity mode {other:?}")),
        }
    }
}

impl std::fmt::Display for SensitivityMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Full => "full",
            Self::Interface => "interface",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaterialConfig {
    /// Samples per side of the simulation grid (power of two).
    pub grid_size: usize,
    /// Physical side length of the simulated material patch in mm.
    pub extent_mm: f64,
    pub wavelength_nm: f64,
    /// 1/e² intensity diameter of the Gaussian illumination spot in mm.
    pub spot_diameter_mm: f64,
    pub indenter_radius_mm: f64,
    /// Phase gain of surface displacement, rad per µm.
    pub deform_gain: f64,
    /// Phase gain of temperature change, rad per °C.
    pub thermal_gain: f64,
    pub thermal_ref: f64,
    pub temperature_min: f64,
    pub temperature_max: f64,
    pub max_depth_um: f64,
    pub sensitivity_mode: SensitivityMode,
    pub seed: u64,
}

impl Default for MaterialConfig {
    fn default() -> Self {
        Self {
            grid_size: 256,
            extent_mm: 20.0,
            wavelength_nm: 632.8,
            spot_diameter_mm: 8.0,
            indenter_radius_mm: 1.5,
            deform_gain: 0.195,
            thermal_gain: 2.62,
            thermal_ref: 22.0,
            temperature_min: 10.0,
            temperature_max: 40.0,
            max_depth_um: 1000.0,
            sensitivity_mode: SensitivityMode::Full,
            seed: 1,
        }
    }
}

const KEYS: &[&str] = &[
    "grid_size",
    "extent_mm",
    "wavelength_nm",
    "spot_diameter_mm",
    "indenter_radius_mm",
    "deform_gain",
    "thermal_gain",
    "thermal_ref",
    "temperature_min",
    "temperature_max",
    "max_depth_um",
    "sensitivity_mode",
    "seed",
];

impl MaterialConfig {
    pub fn validate(&self) -> Result<(), OpticsError> {
        let bad = |msg: String| Err(OpticsError::InvalidConfig(msg));
        if self.grid_size < 2 || !self.grid_size.is_power_of_two() {
            return bad(format!("grid_size {} is not a power of two", self.grid_size));
        }
        if !(self.extent_mm > 0.0) {
            return bad(format!("extent {} mm must be positive", self.extent_mm));
        }
        if !(self.spot_diameter_mm > 0.0 && self.spot_diameter_mm < self.extent_mm) {
            return bad(format!(
                "spot diameter {} mm must lie in (0, extent)",
                self.spot_diameter_mm
            ));
        }
        if !(self.indenter_radius_mm > 0.0) {
            return bad("indenter radius must be positive".into());
        }
        if !(self.deform_gain > 0.0) || !self.deform_gain.is_finite() {
            return bad("deform_gain must be positive".into());
        }
        if !(self.thermal_gain >= 0.0) || !self.thermal_gain.is_finite() {
            return bad("thermal_gain must be non-negative".into());
        }
        if !(self.temperature_min < self.temperature_max) {
            return bad("temperature_min must be below temperature_max".into());
        }
        if !(self.max_depth_um > 0.0) {
            return bad("max_depth_um must be positive".into());
        }
        if !(self.wavelength_nm > 0.0) {
            return bad("wavelength must be positive".into());
        }
        Ok(())
    }

    /// Grid pitch in mm.
    pub fn pixel_mm(&self) -> f64 {
        self.extent_mm / self.grid_size as f64
    }

    /// Deformation phase gain after the sensitivity mode is applied.
    pub fn effective_deform_gain(&self) -> f64 {
        match self.sensitivity_mode {
            SensitivityMode::Full => self.deform_gain,
            SensitivityMode::Interface => self.deform_gain * INTERFACE_DEFORM_SCALE,
        }
    }

    pub fn base_phase_scale(&self) -> f64 {
        match self.sensitivity_mode {
            SensitivityMode::Full => 1.0,
            SensitivityMode::Interface => INTERFACE_PHASE_SCALE,
        }
    }

    /// Angular pitch of one far-field pixel, λ / extent, in radians.
    pub fn far_field_pitch_rad(&self) -> f64 {
        self.wavelength_nm * 1e-9 / (self.extent_mm * 1e-3)
    }

    pub fn to_kv(&self) -> KvMap {
        let mut kv = KvMap::new();
        kv.set("grid_size", self.grid_size);
        kv.set("extent_mm", kv::float(self.extent_mm));
        kv.set("wavelength_nm", kv::float(self.wavelength_nm));
        kv.set("spot_diameter_mm", kv::float(self.spot_diameter_mm));
        kv.set("indenter_radius_mm", kv::float(self.indenter_radius_mm));
        kv.set("deform_gain", kv::float(self.deform_gain));
        kv.set("thermal_gain", kv::float(self.thermal_gain));
        kv.set("thermal_ref", kv::float(self.thermal_ref));
        kv.set("temperature_min", kv::float(self.temperature_min));
        kv.set("temperature_max", kv::float(self.temperature_max));
        kv.set("max_depth_um", kv::float(self.max_depth_um));
        kv.set("sensitivity_mode", self.sensitivity_mode);
        kv.set("seed", self.seed);
        kv
    }

    /// Defaults overridden by whichever keys are present.
    pub fn from_kv(kv: &KvMap) -> Result<Self, OpticsError> {
        kv.check_keys(KEYS)?;
        let mut c = Self::default();
        kv.update("grid_size", &mut c.grid_size)?;
        kv.update("extent_mm", &mut c.extent_mm)?;
        kv.update("wavelength_nm", &mut c.wavelength_nm)?;
        kv.update("spot_diameter_mm", &mut c.spot_diameter_mm)?;
        kv.update("indenter_radius_mm", &mut c.indenter_radius_mm)?;
        kv.update("deform_gain", &mut c.deform_gain)?;
        kv.update("thermal_gain", &mut c.thermal_gain)?;
        kv.update("thermal_ref", &mut c.thermal_ref)?;
        kv.update("temperature_min", &mut c.temperature_min)?;
        kv.update("temperature_max", &mut c.temperature_max)?;
        kv.update("max_depth_um", &mut c.max_depth_um)?;
        kv.update("sensitivity_mode", &mut c.sensitivity_mode)?;
        kv.update("seed", &mut c.seed)?;
        c.validate()?;
        Ok(c)
    }

    pub fn parse(text: &str) -> Result<Self, OpticsError> {
        Self::from_kv(&KvMap::parse(text)?)
    }

    pub fn to_text(&self) -> String {
        format!("# material configuration\n{}", self.to_kv().to_text())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        MaterialConfig::default().validate().unwrap();
    }

    #[test]
    fn text_round_trip() {
        let mut c = MaterialConfig::default();
        c.deform_gain = 0.1234567891;
        c.sensitivity_mode = SensitivityMode::Interface;
        c.seed = u64::MAX;
        let back = MaterialConfig::parse(&c.to_text()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn rejects_non_power_of_two_grid() {
        let c = MaterialConfig {
            grid_size: 200,
            ..Default::default()
        };
        assert!(matches!(c.validate(), Err(OpticsError::InvalidConfig(_))));
    }

    #[test]
    fn rejects_nonpositive_extent() {
        let c = MaterialConfig {
            extent_mm: 0.0,
            ..Default::default()
        };
        assert!(matches!(c.validate(), Err(OpticsError::InvalidConfig(_))));
    }

    #[test]
    fn rejects_unknown_key() {
        assert!(MaterialConfig::parse("grid = 256\n").is_err());
    }

    #[test]
    fn interface_mode_scales_gain() {
        let c = MaterialConfig {
            sensitivity_mode: SensitivityMode::Interface,
            ..Default::default()
        };
        assert!((c.effective_deform_gain() - 0.05 * c.deform_gain).abs() < 1e-15);
        assert_eq!(c.base_phase_scale(), 0.3);
    }
}
