//! Model checkpoints.
//!
//! Little-endian layout:
//!
//! ```text
//! magic   "SPKM1\n"
//! u32     version (1)
//! u32+[u8] architecture descriptor (key = value lines)
//! u32+[u8] scaling bounds (key = value lines)
//! per parameter tensor, in layout order: f64 values
//! per batchnorm layer: u64 batches seen, f64 running means, f64 running variances
//! u32     CRC-32 of all preceding bytes
//! ```

use std::path::Path;

use super::{Descriptor, Model, NnError, Real};
use crate::binfmt::{ByteReader, ByteWriter, FormatError};
use crate::dataset::ScalingBounds;
use crate::kv::KvMap;

pub const MODEL_MAGIC: &str = "SPKM1\n";
pub const MODEL_VERSION: u32 = 1;

/// A model together with the target scaling it was trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel<T> {
    pub model: Model<T>,
    pub bounds: ScalingBounds,
}

pub fn write_model<T: Real>(model: &Model<T>, bounds: &ScalingBounds) -> Vec<u8> {
    let mut w = ByteWriter::with_capacity(model.param_count() * 8 + 1024);
    w.bytes(MODEL_MAGIC.as_bytes());
    w.u32(MODEL_VERSION);
    w.string(&model.descriptor().to_kv().to_text());
    w.string(&bounds.to_kv().to_text());
    for p in model.params() {
        for &v in p.data() {
            w.f64(v.f64());
        }
    }
    for bn in model.bn_states() {
        w.u64(bn.batches);
        for &v in bn.mean.iter().chain(&bn.var) {
            w.f64(v.f64());
        }
    }
    w.seal()
}

fn malformed(e: impl std::fmt::Display) -> FormatError {
    FormatError::Malformed(e.to_string())
}

pub fn read_model<T: Real>(data: &[u8]) -> Result<TrainedModel<T>, NnError> {
    let mut r = ByteReader::open(data, MODEL_MAGIC, MODEL_VERSION)?;
    let desc_text = r.string()?;
    let bounds_text = r.string()?;
    let descriptor = KvMap::parse(desc_text)
        .map_err(malformed)
        .and_then(|kv| Descriptor::from_kv(&kv).map_err(malformed))?;
    let bounds = KvMap::parse(bounds_text)
        .map_err(malformed)
        .and_then(|kv| ScalingBounds::from_kv(&kv).map_err(malformed))?;

    let layout = descriptor.layout();
    let too_big = || FormatError::Malformed("declared model size overflows".into());
    let mut values: u64 = 0;
    for spec in &layout {
        let n = spec
            .shape
            .iter()
            .try_fold(1u64, |a, &d| a.checked_mul(d as u64))
            .ok_or_else(too_big)?;
        values = values.checked_add(n).ok_or_else(too_big)?;
    }
    let bn_channels: Vec<usize> = match descriptor.architecture {
        super::Architecture::Decoder => descriptor.channels.to_vec(),
        super::Architecture::Linear => Vec::new(),
    };
    let mut body = values.checked_mul(8).ok_or_else(too_big)?;
    for &c in &bn_channels {
        body = body
            .checked_add(8 + 16 * c as u64)
            .ok_or_else(too_big)?;
    }
    r.expect_body(body)?;

    let mut params = Vec::with_capacity(layout.len());
    for spec in &layout {
        let mut p = Vec::with_capacity(spec.len());
        for _ in 0..spec.len() {
            p.push(T::lit(r.f64()?));
        }
        params.push(p);
    }
    let mut bn = Vec::with_capacity(bn_channels.len());
    for &c in &bn_channels {
        let batches = r.u64()?;
        let mut read = |n: usize| (0..n).map(|_| r.f64().map(T::lit)).collect::<Result<Vec<T>, _>>();
        let mean = read(c)?;
        let var = read(c)?;
        bn.push(super::BnState { mean, var, batches });
    }
    let model = Model::from_parts(descriptor, params, bn)?;
    Ok(TrainedModel { model, bounds })
}

pub fn save_model<T: Real>(
    path: &Path,
    model: &Model<T>,
    bounds: &ScalingBounds,
) -> Result<(), NnError> {
    std::fs::write(path, write_model(model, bounds))
        .map_err(|e| NnError::Io(format!("{}: {e}", path.display())))
}

pub fn load_model<T: Real>(path: &Path) -> Result<TrainedModel<T>, NnError> {
    let data = std::fs::read(path).map_err(|e| NnError::Io(format!("{}: {e}", path.display())))?;
    read_model(&data)
}
