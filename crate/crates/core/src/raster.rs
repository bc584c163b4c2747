//! Grayscale rasters and their on-disk form.
//!
//! File layout: `width: u32 LE`, `height: u32 LE`, then `width * height`
//! row-major bytes.

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("raster has a zero dimension ({width}x{height})")]
    Degenerate { width: u32, height: u32 },
    #[error("raster payload is {actual} bytes, header declares {expected}")]
    Truncated { expected: usize, actual: usize },
    #[error("raster header is shorter than 8 bytes")]
    MissingHeader,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, PartialEq, Eq)]
pub struct Raster {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl std::fmt::Debug for Raster {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Raster")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl Raster {
    pub fn filled(width: u32, height: u32, value: u8) -> Self {
        Self {
            width,
            height,
            pixels: vec![value; width as usize * height as usize],
        }
    }

    pub fn from_pixels(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, RasterError> {
        let expected = width as usize * height as usize;
        if pixels.len() != expected {
            return Err(RasterError::Truncated {
                expected,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Builds a raster from a per-pixel function of `(x, y)`.
    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> u8) -> Self {
        let mut pixels = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn is_degenerate(&self) -> bool {
        self.width == 0 || self.height == 0
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: u8) {
        let w = self.width as usize;
        self.pixels[y as usize * w + x as usize] = v;
    }

    /// Fills the clipped rectangle `[x, x+w) × [y, y+h)`.
    pub fn fill_rect(&mut self, x: u32, y: u32, w: u32, h: u32, v: u8) {
        let x1 = (x + w).min(self.width);
        let y1 = (y + h).min(self.height);
        for yy in y.min(self.height)..y1 {
            let row = yy as usize * self.width as usize;
            self.pixels[row + x.min(self.width) as usize..row + x1 as usize].fill(v);
        }
    }

    /// Number of differing pixels; `None` if the dimensions differ.
    pub fn diff_count(&self, other: &Raster) -> Option<usize> {
        if self.width != other.width || self.height != other.height {
            return None;
        }
        Some(
            self.pixels
                .iter()
                .zip(&other.pixels)
                .filter(|(a, b)| a != b)
                .count(),
        )
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.pixels.len());
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, RasterError> {
        if bytes.len() < 8 {
            return Err(RasterError::MissingHeader);
        }
        let width = u32::from_le_bytes(bytes[0..4].try_into().unwrap());
        let height = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        Self::from_pixels(width, height, bytes[8..].to_vec())
    }

    pub fn write_to(&self, path: &Path) -> Result<(), RasterError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read_from(path: &Path) -> Result<Self, RasterError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_round_trip() {
        let r = Raster::from_fn(3, 2, |x, y| (x * 10 + y) as u8);
        let bytes = r.to_bytes();
        assert_eq!(&bytes[..8], &[3, 0, 0, 0, 2, 0, 0, 0]);
        assert_eq!(Raster::from_bytes(&bytes).unwrap(), r);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let mut bytes = Raster::filled(4, 4, 7).to_bytes();
        bytes.pop();
        assert!(matches!(
            Raster::from_bytes(&bytes),
            Err(RasterError::Truncated { expected: 16, actual: 15 })
        ));
        assert!(matches!(
            Raster::from_bytes(&[1, 2, 3]),
            Err(RasterError::MissingHeader)
        ));
    }

    #[test]
    fn fill_rect_clips() {
        let mut r = Raster::filled(4, 4, 0);
        r.fill_rect(2, 2, 10, 10, 9);
        assert_eq!(r.pixels().iter().filter(|&&p| p == 9).count(), 4);
    }
}
