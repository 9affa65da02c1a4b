//! Dataset container.
//!
//! Little-endian layout:
//!
//! ```text
//! magic   "SPKL1\n"
//! u32     version (1)
//! u64     sample count
//! u32     image side
//! u64     creation seed
//! u32+[u8] metadata text (key = value lines)
//! per sample: side² × f32 image, 3 × f64 raw stimulus, u8 shape code
//! u32     CRC-32 of all preceding bytes
//! ```

use std::path::Path;

pub use crate::binfmt::FormatError;
use crate::binfmt::{ByteReader, ByteWriter};
use crate::optics::{Shape, StimulusVector};

use super::{Dataset, Sample};

pub const DATASET_MAGIC: &str = "SPKL1\n";
pub const DATASET_VERSION: u32 = 1;

pub fn write_dataset(d: &Dataset) -> Vec<u8> {
    let pixels = d.image_side * d.image_side;
    let mut w = ByteWriter::with_capacity(64 + d.metadata.len() + d.len() * (pixels * 4 + 25));
    w.bytes(DATASET_MAGIC.as_bytes());
    w.u32(DATASET_VERSION);
    w.u64(d.len() as u64);
    w.u32(d.image_side as u32);
    w.u64(d.creation_seed);
    w.string(&d.metadata);
    for s in &d.samples {
        debug_assert_eq!(s.image.len(), pixels);
        for &v in &s.image {
            w.f32(v);
        }
        w.f64(s.raw.depth);
        w.f64(s.raw.position);
        w.f64(s.raw.temperature);
        w.u8(s.raw.shape.code());
    }
    w.seal()
}

pub fn read_dataset(data: &[u8]) -> Result<Dataset, FormatError> {
    let mut r = ByteReader::open(data, DATASET_MAGIC, DATASET_VERSION)?;
    let count = r.u64()?;
    let side = r.u32()? as u64;
    let creation_seed = r.u64()?;
    let metadata = r.string()?.to_string();
    let per_sample = side
        .checked_mul(side)
        .and_then(|p| p.checked_mul(4))
        .and_then(|b| b.checked_add(25))
        .ok_or_else(|| FormatError::Malformed("image side overflows".into()))?;
    let body = count
        .checked_mul(per_sample)
        .ok_or_else(|| FormatError::Malformed("sample count overflows".into()))?;
    r.expect_body(body)?;

    let pixels = (side * side) as usize;
    let mut samples = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let mut image = Vec::with_capacity(pixels);
        for _ in 0..pixels {
            image.push(r.f32()?);
        }
        let depth = r.f64()?;
        let position = r.f64()?;
        let temperature = r.f64()?;
        let code = r.u8()?;
        let shape = Shape::from_code(code)
            .ok_or_else(|| FormatError::Malformed(format!("unknown shape code {code}")))?;
        samples.push(Sample {
            image,
            raw: StimulusVector {
                depth,
                position,
                temperature,
                shape,
            },
        });
    }
    Ok(Dataset {
        image_side: side as usize,
        samples,
        creation_seed,
        metadata,
    })
}

pub fn save_dataset(d: &Dataset, path: &Path) -> Result<(), FormatError> {
    std::fs::write(path, write_dataset(d))?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset, FormatError> {
    let data = std::fs::read(path)?;
    read_dataset(&data)
}
