use std::path::Path;

use crate::error::{Error, Result};

/// Per-pixel coverage in `[0, 1]`, row-major from the top-left pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct SilhouetteImage {
    pub width: u32,
    pub height: u32,
    pub values: Vec<f64>,
}

impl SilhouetteImage {
    pub fn new(width: u32, height: u32, values: Vec<f64>) -> Result<Self> {
        if values.len() != width as usize * height as usize {
            return Err(Error::Dimension(format!(
                "{width}x{height} silhouette needs {} values, got {}",
                width as usize * height as usize,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Record { index: i, message: format!("coverage {} outside [0, 1]", values[i]) });
        }
        Ok(SilhouetteImage { width, height, values })
    }

    pub fn zeros(width: u32, height: u32) -> Self {
        SilhouetteImage { width, height, values: vec![0.0; width as usize * height as usize] }
    }

    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.values[y as usize * self.width as usize + x as usize]
    }

    pub fn pixel_count(&self) -> usize {
        self.values.len()
    }

    /// Pixels with coverage of at least one half.
    pub fn foreground_count(&self) -> usize {
        self.values.iter().filter(|&&v| v >= 0.5).count()
    }

    pub fn same_dims(&self, other: &SilhouetteImage) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Binary PGM (`P5`, maxval 255); coverage is written as `round(255 v)`.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.values.iter().map(|v| (255.0 * v).round() as u8));
        out
    }

    /// Reads a binary PGM; samples at or above half of maxval are foreground.
    pub fn from_pgm(bytes: &[u8]) -> Result<Self> {
        let (header, offset) = parse_pnm_header(bytes, b"P5")?;
        let [width, height, maxval] = header;
        if maxval == 0 || maxval > 255 {
            return Err(Error::Binary { offset, message: format!("unsupported PGM maxval {maxval}") });
        }
        let n = width as usize * height as usize;
        let data = &bytes[offset..];
        if data.len() < n {
            return Err(Error::Binary { offset: offset + data.len(), message: "unexpected end of PGM pixel data".into() });
        }
        let threshold = maxval.div_ceil(2);
        let values = data[..n].iter().map(|&b| if b as u32 >= threshold { 1.0 } else { 0.0 }).collect();
        Ok(SilhouetteImage { width, height, values })
    }

    pub fn read_pgm(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_pgm(&bytes)
    }

    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_pgm()).map_err(|e| Error::io(path, e))
    }
}

/// Header fields and the byte offset of the first sample.
pub(crate) fn parse_pnm_header(bytes: &[u8], magic: &[u8; 2]) -> Result<([u32; 3], usize)> {
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(Error::Binary {
            offset: 0,
            message: format!("expected {} magic", String::from_utf8_lossy(magic)),
        });
    }
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for field in fields.iter_mut() {
        // whitespace and `#` comments between tokens
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Binary { offset: pos, message: "malformed image header".into() });
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or(Error::Binary { offset: start, message: "header value out of range".into() })?;
    }
    // exactly one whitespace byte separates the header from the samples
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::Binary { offset: pos, message: "malformed image header".into() });
    }
    Ok((fields, pos + 1))
}

/// Nearest-surface depth per pixel; `None` where no surface was hit.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: u32,
    pub height: u32,
    pub values: Vec<Option<f64>>,
}

impl DepthImage {
    pub fn empty(width: u32, height: u32) -> Self {
        DepthImage { width, height, values: vec![None; width as usize * height as usize] }
    }

    pub fn get(&self, x: u32, y: u32) -> Option<f64> {
        self.values[y as usize * self.width as usize + x as usize]
    }

    pub fn hit_mask(&self) -> SilhouetteImage {
        SilhouetteImage {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|d| if d.is_some() { 1.0 } else { 0.0 }).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip_thresholds_soft_values() {
        let img = SilhouetteImage::new(3, 2, vec![0.0, 1.0, 0.49, 0.51, 0.25, 1.0]).unwrap();
        let bytes = img.to_pgm();
        assert!(bytes.starts_with(b"P5\n3 2\n255\n"));
        assert_eq!(&bytes[11..], &[0, 255, 125, 130, 64, 255]);
        let back = SilhouetteImage::from_pgm(&bytes).unwrap();
        assert_eq!(back.values, vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn binary_pgm_round_trip_is_lossless() {
        let img = SilhouetteImage::new(4, 1, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(SilhouetteImage::from_pgm(&img.to_pgm()).unwrap(), img);
    }

    #[test]
    fn pgm_header_with_comment() {
        let mut bytes = b"P5 # made by hand\n2 1\n# max\n255\n".to_vec();
        bytes.extend([200, 3]);
        let img = SilhouetteImage::from_pgm(&bytes).unwrap();
        assert_eq!(img.values, vec![1.0, 0.0]);
    }

    #[test]
    fn pgm_errors() {
        assert!(SilhouetteImage::from_pgm(b"P6\n1 1\n255\n\0").is_err());
        assert!(matches!(SilhouetteImage::from_pgm(b"P5\n2 2\n255\n\0\0"), Err(Error::Binary { offset: 13, .. })));
        assert!(SilhouetteImage::from_pgm(b"P5\n2 x\n255\n").is_err());
    }

    #[test]
    fn constructor_validates() {
        assert!(SilhouetteImage::new(2, 2, vec![0.0; 3]).is_err());
        assert!(SilhouetteImage::new(1, 1, vec![1.5]).is_err());
    }
}
