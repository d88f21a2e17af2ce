//! Planar image containers shared by the view extractor, the codec and the
//! metrics. Samples are stored as `u16` regardless of bit depth; all
//! arithmetic in the codec is sized for 10-bit input.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Chroma subsampling of a planar image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChromaFormat {
    #[serde(rename = "444")]
    C444,
    #[serde(rename = "420")]
    C420,
}

impl ChromaFormat {
    /// Per-axis chroma subsampling factor.
    pub fn subsample(self) -> usize {
        match self {
            ChromaFormat::C444 => 1,
            ChromaFormat::C420 => 2,
        }
    }

    pub fn chroma_dims(self, width: usize, height: usize) -> (usize, usize) {
        let s = self.subsample();
        (width.div_ceil(s), height.div_ceil(s))
    }
}

/// One sample plane.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u16>,
}

impl Plane {
    pub fn new(width: usize, height: usize) -> Self {
        Plane {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    pub fn filled(width: usize, height: usize, value: u16) -> Self {
        Plane {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u16) {
        self.data[y * self.width + x] = v;
    }

    #[inline]
    pub fn row(&self, y: usize) -> &[u16] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    /// Sample with edge replication for out-of-bounds coordinates.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> u16 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.get(x, y)
    }

    /// Pad to `(width.next_multiple_of(bw), height.next_multiple_of(bh))`
    /// with edge replication.
    pub fn padded(&self, bw: usize, bh: usize) -> Plane {
        let pw = self.width.next_multiple_of(bw);
        let ph = self.height.next_multiple_of(bh);
        if pw == self.width && ph == self.height {
            return self.clone();
        }
        let mut out = Plane::new(pw, ph);
        for y in 0..ph {
            let sy = y.min(self.height - 1);
            for x in 0..pw {
                let sx = x.min(self.width - 1);
                out.set(x, y, self.get(sx, sy));
            }
        }
        out
    }

    /// Top-left crop.
    pub fn cropped(&self, width: usize, height: usize) -> Plane {
        let mut out = Plane::new(width, height);
        for y in 0..height {
            out.data[y * width..(y + 1) * width].copy_from_slice(&self.row(y)[..width]);
        }
        out
    }
}

/// A planar YUV image: one luma plane plus two chroma planes.
///
/// Both whole lenslet rasters and individual extracted views use this type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub planes: [Plane; 3],
    pub bit_depth: u8,
    pub chroma: ChromaFormat,
}

impl Image {
    pub fn new(width: usize, height: usize, bit_depth: u8, chroma: ChromaFormat) -> Result<Self> {
        validate_bit_depth(bit_depth)?;
        if width == 0 || height == 0 {
            return Err(Error::Dimension("image dimensions must be nonzero".into()));
        }
        let (cw, ch) = chroma.chroma_dims(width, height);
        Ok(Image {
            planes: [
                Plane::new(width, height),
                Plane::new(cw, ch),
                Plane::new(cw, ch),
            ],
            bit_depth,
            chroma,
        })
    }

    /// Mid-gray image, the DC fallback value of the codec.
    pub fn flat(width: usize, height: usize, bit_depth: u8, chroma: ChromaFormat) -> Result<Self> {
        let mut img = Image::new(width, height, bit_depth, chroma)?;
        let mid = 1u16 << (bit_depth - 1);
        for p in &mut img.planes {
            p.data.fill(mid);
        }
        Ok(img)
    }

    pub fn width(&self) -> usize {
        self.planes[0].width
    }

    pub fn height(&self) -> usize {
        self.planes[0].height
    }

    pub fn max_value(&self) -> u16 {
        (1u16 << self.bit_depth) - 1
    }

    /// Checks plane dimensions against the chroma format and the sample
    /// range against the bit depth.
    pub fn validate(&self) -> Result<()> {
        validate_bit_depth(self.bit_depth)?;
        let (cw, ch) = self.chroma.chroma_dims(self.width(), self.height());
        for (i, p) in self.planes.iter().enumerate() {
            let (ew, eh) = if i == 0 {
                (self.width(), self.height())
            } else {
                (cw, ch)
            };
            if p.width != ew || p.height != eh {
                return Err(Error::Dimension(format!(
                    "plane {i} is {}x{}, expected {ew}x{eh}",
                    p.width, p.height
                )));
            }
            if p.data.len() != p.width * p.height {
                return Err(Error::Dimension(format!("plane {i} buffer size mismatch")));
            }
            let max = self.max_value();
            if let Some(bad) = p.data.iter().find(|&&v| v > max) {
                return Err(Error::Dimension(format!(
                    "plane {i} sample {bad} exceeds bit depth {}",
                    self.bit_depth
                )));
            }
        }
        Ok(())
    }

    pub fn same_layout(&self, other: &Image) -> bool {
        self.bit_depth == other.bit_depth
            && self.chroma == other.chroma
            && self.width() == other.width()
            && self.height() == other.height()
    }
}

fn validate_bit_depth(bit_depth: u8) -> Result<()> {
    if bit_depth == 8 || bit_depth == 10 {
        Ok(())
    } else {
        Err(Error::Dimension(format!(
            "unsupported bit depth {bit_depth} (expected 8 or 10)"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chroma_dims() {
        assert_eq!(ChromaFormat::C444.chroma_dims(13, 7), (13, 7));
        assert_eq!(ChromaFormat::C420.chroma_dims(13, 7), (7, 4));
    }

    #[test]
    fn padding_replicates_edges() {
        let mut p = Plane::new(5, 3);
        for y in 0..3 {
            for x in 0..5 {
                p.set(x, y, (10 * y + x) as u16);
            }
        }
        let padded = p.padded(4, 4);
        assert_eq!(padded.width, 8);
        assert_eq!(padded.height, 4);
        assert_eq!(padded.get(7, 3), p.get(4, 2));
        assert_eq!(padded.cropped(5, 3), p);
    }

    #[test]
    fn validate_rejects_out_of_range_samples() {
        let mut img = Image::new(4, 4, 8, ChromaFormat::C444).unwrap();
        img.planes[0].set(0, 0, 300);
        assert!(img.validate().is_err());
    }

    #[test]
    fn rejects_odd_bit_depths() {
        assert!(Image::new(4, 4, 12, ChromaFormat::C444).is_err());
    }
}
