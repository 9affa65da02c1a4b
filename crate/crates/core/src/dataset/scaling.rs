//! Min-max scaling of stimulus features into [-1, 1].

use super::DatasetError;
use crate::kv::{self, KvMap};
use crate::optics::StimulusVector;

/// A stimulus mapped feature-wise by `2(x − min)/(max − min) − 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledStimulus(pub [f64; 3]);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingBounds {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl ScalingBounds {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Result<Self, DatasetError> {
        for i in 0..3 {
            if !(max[i] > min[i]) {
                return Err(DatasetError::DegenerateBounds {
                    feature: i,
                    value: min[i],
                });
            }
        }
        Ok(Self { min, max })
    }

    pub fn from_stimuli<'a>(
        stimuli: impl IntoIterator<Item = &'a StimulusVector>,
    ) -> Result<Self, DatasetError> {
        let mut min = [f64::INFINITY; 3];
        let mut max = [f64::NEG_INFINITY; 3];
        let mut any = false;
        for s in stimuli {
            any = true;
            for (i, v) in s.features().into_iter().enumerate() {
                min[i] = min[i].min(v);
                max[i] = max[i].max(v);
            }
        }
        if !any {
            return Err(DatasetError::Empty);
        }
        Self::new(min, max)
    }

    /// Like [`ScalingBounds::from_stimuli`], but only the features listed in
    /// `required` must vary; a constant feature outside that list gets a unit
    /// range centred on its value.
    pub fn from_stimuli_for<'a>(
        stimuli: impl IntoIterator<Item = &'a StimulusVector>,
        required: &[usize],
    ) -> Result<Self, DatasetError> {
        let mut min = [f64::INFINITY; 3];
        let mut max = [f64::NEG_INFINITY; 3];
        let mut any = false;
        for s in stimuli {
            any = true;
            for (i, v) in s.features().into_iter().enumerate() {
                min[i] = min[i].min(v);
                max[i] = max[i].max(v);
            }
        }
        if !any {
            return Err(DatasetError::Empty);
        }
        for i in 0..3 {
            if !required.contains(&i) && !(max[i] > min[i]) {
                min[i] -= 0.5;
                max[i] += 0.5;
            }
        }
        Self::new(min, max)
    }

    pub fn range(&self, feature: usize) -> f64 {
        self.max[feature] - self.min[feature]
    }

    pub fn scale_value(&self, feature: usize, v: f64) -> f64 {
        2.0 * (v - self.min[feature]) / self.range(feature) - 1.0
    }

    pub fn unscale_value(&self, feature: usize, s: f64) -> f64 {
        (s + 1.0) * 0.5 * self.range(feature) + self.min[feature]
    }

    /// Out-of-range stimuli map outside [-1, 1] without error.
    pub fn scale(&self, x: &StimulusVector) -> Result<ScaledStimulus, DatasetError> {
        let f = x.features();
        Ok(ScaledStimulus([
            self.scale_value(0, f[0]),
            self.scale_value(1, f[1]),
            self.scale_value(2, f[2]),
        ]))
    }

    pub fn unscale(&self, s: &ScaledStimulus) -> StimulusVector {
        StimulusVector::new(
            self.unscale_value(0, s.0[0]),
            self.unscale_value(1, s.0[1]),
            self.unscale_value(2, s.0[2]),
        )
    }

    pub fn to_kv(&self) -> KvMap {
        let mut kv = KvMap::new();
        for (i, name) in ["depth", "position", "temperature"].iter().enumerate() {
            kv.set(&format!("{name}_min"), kv::float(self.min[i]));
            kv.set(&format!("{name}_max"), kv::float(self.max[i]));
        }
        kv
    }

    pub fn from_kv(kv: &KvMap) -> Result<Self, DatasetError> {
        let mut min = [0.0; 3];
        let mut max = [0.0; 3];
        for (i, name) in ["depth", "position", "temperature"].iter().enumerate() {
            min[i] = kv.require(&format!("{name}_min"))?;
            max[i] = kv.require(&format!("{name}_max"))?;
        }
        Self::new(min, max)
    }
}
