//! Binary PGM (P5, 8-bit) import and export.

use std::io::{Read, Write};
use std::path::Path;

use super::{OpticsError, Pixels, SpeckleImage};

impl SpeckleImage {
    /// Encode as P5. Unquantized intensities are scaled so the maximum maps to 255.
    pub fn to_pgm(&self) -> Vec<u8> {
        let bytes: Vec<u8> = match &self.pixels {
            Pixels::Quantized(v) => v.clone(),
            Pixels::Intensity(v) => {
                let max = v.iter().cloned().fold(0.0, f64::max);
                let scale = if max > 0.0 { 255.0 / max } else { 0.0 };
                v.iter().map(|x| (x * scale).round().clamp(0.0, 255.0) as u8).collect()
            }
        };
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&bytes);
        out
    }

    pub fn write_pgm(&self, path: &Path) -> Result<(), OpticsError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_pgm())?;
        Ok(())
    }

    pub fn from_pgm(data: &[u8]) -> Result<SpeckleImage, OpticsError> {
        let err = |m: &str| OpticsError::Pgm(m.to_string());
        let mut pos = 0;
        let mut tokens = Vec::with_capacity(4);
        while tokens.len() < 4 {
            // skip whitespace and comments
            while pos < data.len() {
                if data[pos] == b'#' {
                    while pos < data.len() && data[pos] != b'\n' {
                        pos += 1;
                    }
                } else if data[pos].is_ascii_whitespace() {
                    pos += 1;
                } else {
                    break;
                }
            }
            let start = pos;
            while pos < data.len() && !data[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(err("truncated header"));
            }
            tokens.push(std::str::from_utf8(&data[start..pos]).map_err(|_| err("bad header"))?);
        }
        if tokens[0] != "P5" {
            return Err(err("not a binary (P5) PGM"));
        }
        let parse = |t: &str| t.parse::<usize>().map_err(|_| err("bad header number"));
        let (w, h, maxval) = (parse(tokens[1])?, parse(tokens[2])?, parse(tokens[3])?);
        if maxval == 0 || maxval > 255 {
            return Err(err("only 8-bit PGM is supported"));
        }
        // single whitespace byte after maxval
        pos += 1;
        let need = w.checked_mul(h).ok_or_else(|| err("image too large"))?;
        if data.len() < pos + need {
            return Err(err("truncated pixel data"));
        }
        Ok(SpeckleImage::from_quantized(w, h, data[pos..pos + need].to_vec()))
    }

    pub fn read_pgm(path: &Path) -> Result<SpeckleImage, OpticsError> {
        let mut data = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut data)?;
        Self::from_pgm(&data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_header_and_round_trip() {
        let img = SpeckleImage::from_quantized(3, 2, vec![0, 10, 20, 30, 40, 255]);
        let bytes = img.to_pgm();
        assert!(bytes.starts_with(b"P5\n3 2\n255\n"));
        assert_eq!(bytes.len(), 11 + 6);
        let back = SpeckleImage::from_pgm(&bytes).unwrap();
        assert_eq!(back.quantized().unwrap(), img.quantized().unwrap());
    }

    #[test]
    fn pgm_with_comment() {
        let mut bytes = b"P5\n# speckle\n2 1\n255\n".to_vec();
        bytes.extend([7, 9]);
        let img = SpeckleImage::from_pgm(&bytes).unwrap();
        assert_eq!((img.width, img.height), (2, 1));
        assert_eq!(img.quantized().unwrap(), &[7, 9]);
    }

    #[test]
    fn truncated_pgm_is_an_error() {
        let img = SpeckleImage::from_quantized(4, 4, vec![1; 16]);
        let bytes = img.to_pgm();
        assert!(SpeckleImage::from_pgm(&bytes[..bytes.len() - 3]).is_err());
        assert!(SpeckleImage::from_pgm(b"P2\n1 1\n255\n0").is_err());
    }
}
