//! Grayscale images: PGM I/O, nearest-neighbor resizing, normalization,
//! geometric and photometric augmentation, and labeled datasets.

mod augment;
mod dataset;
mod pgm;

pub use augment::{augment, AugOp, AugmentationPlan};
pub use dataset::{load_manifest, save_dataset, DatasetItem, Label, LabeledDataset, ManifestRow};
pub use pgm::{decode_pgm, encode_pgm, load_pgm, save_pgm};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub enum Pixels {
    /// Raw 8-bit intensities.
    Raw(Vec<u8>),
    /// Real intensities, nominally in `[0, 1]`.
    Normalized(Vec<f64>),
}

/// Row-major grayscale image.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    height: usize,
    width: usize,
    pixels: Pixels,
}

impl GrayImage {
    pub fn from_raw(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        Self::checked(height, width, data.len())?;
        Ok(Self {
            height,
            width,
            pixels: Pixels::Raw(data),
        })
    }

    pub fn from_normalized(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        Self::checked(height, width, data.len())?;
        Ok(Self {
            height,
            width,
            pixels: Pixels::Normalized(data),
        })
    }

    pub fn from_matrix(m: &Matrix) -> Self {
        Self {
            height: m.rows(),
            width: m.cols(),
            pixels: Pixels::Normalized(m.as_slice().to_vec()),
        }
    }

    fn checked(height: usize, width: usize, len: usize) -> Result<()> {
        if height == 0 || width == 0 || height * width != len {
            return Err(Error::invalid(format!(
                "{len} pixels do not form a {height}x{width} image"
            )));
        }
        Ok(())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &Pixels {
        &self.pixels
    }

    pub fn is_normalized(&self) -> bool {
        matches!(self.pixels, Pixels::Normalized(_))
    }

    pub fn raw(&self) -> Option<&[u8]> {
        match &self.pixels {
            Pixels::Raw(v) => Some(v),
            Pixels::Normalized(_) => None,
        }
    }

    pub fn normalized(&self) -> Option<&[f64]> {
        match &self.pixels {
            Pixels::Normalized(v) => Some(v),
            Pixels::Raw(_) => None,
        }
    }

    /// Normalized pixels as a matrix.
    pub fn to_matrix(&self) -> Result<Matrix> {
        match &self.pixels {
            Pixels::Normalized(v) => Matrix::from_vec(self.height, self.width, v.clone()),
            Pixels::Raw(_) => Err(Error::InvalidState(
                "image must be normalized before conversion to a matrix".into(),
            )),
        }
    }

    /// 8-bit bytes; normalized values are clamped to `[0, 1]` and rounded.
    pub fn to_raw_bytes(&self) -> Vec<u8> {
        match &self.pixels {
            Pixels::Raw(v) => v.clone(),
            Pixels::Normalized(v) => v
                .iter()
                .map(|&p| (p.clamp(0.0, 1.0) * 255.0).round() as u8)
                .collect(),
        }
    }

    /// Builds an image of the given size where pixel `(r, c)` copies
    /// source pixel `f(r, c)`.
    fn remap(&self, height: usize, width: usize, f: impl Fn(usize, usize) -> (usize, usize)) -> Self {
        let idx = |r, c| {
            let (sr, sc) = f(r, c);
            sr * self.width + sc
        };
        let pixels = match &self.pixels {
            Pixels::Raw(v) => Pixels::Raw(
                (0..height)
                    .flat_map(|r| (0..width).map(move |c| (r, c)))
                    .map(|(r, c)| v[idx(r, c)])
                    .collect(),
            ),
            Pixels::Normalized(v) => Pixels::Normalized(
                (0..height)
                    .flat_map(|r| (0..width).map(move |c| (r, c)))
                    .map(|(r, c)| v[idx(r, c)])
                    .collect(),
            ),
        };
        Self {
            height,
            width,
            pixels,
        }
    }

    pub fn flip_horizontal(&self) -> Self {
        let w = self.width;
        self.remap(self.height, w, |r, c| (r, w - 1 - c))
    }

    pub fn flip_vertical(&self) -> Self {
        let h = self.height;
        self.remap(h, self.width, |r, c| (h - 1 - r, c))
    }

    /// Quarter turn clockwise.
    pub fn rotate_90(&self) -> Self {
        let h = self.height;
        self.remap(self.width, h, |r, c| (h - 1 - c, r))
    }

    /// Multiplies normalized intensities by `factor`, clamping to `[0, 1]`.
    pub fn brightness(&self, factor: f64) -> Result<Self> {
        let v = self.normalized().ok_or_else(|| {
            Error::InvalidState("brightness adjustment needs a normalized image".into())
        })?;
        Self::from_normalized(
            self.height,
            self.width,
            v.iter().map(|p| (p * factor).clamp(0.0, 1.0)).collect(),
        )
    }

    /// Squashes the height by `factor` with nearest-neighbor sampling and
    /// pads back to the original height by replicating the top and bottom
    /// rows.
    pub fn vertical_scale(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor <= 1.0) {
            return Err(Error::invalid(format!(
                "vertical scale factor must lie in (0, 1], got {factor}"
            )));
        }
        let h = self.height;
        let squashed_h = ((h as f64 * factor).round() as usize).clamp(1, h);
        let squashed = resize_nearest(self, squashed_h, self.width)?;
        let top = (h - squashed_h) / 2;
        Ok(squashed.remap(h, self.width, |r, c| {
            (r.saturating_sub(top).min(squashed_h - 1), c)
        }))
    }
}

/// Center-aligned nearest-neighbor resize:
/// `out(i, j) = in(floor((i + 0.5) * H / out_h), floor((j + 0.5) * W / out_w))`.
pub fn resize_nearest(image: &GrayImage, out_h: usize, out_w: usize) -> Result<GrayImage> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::invalid(format!(
            "output size must be positive, got {out_h}x{out_w}"
        )));
    }
    let (h, w) = (image.height, image.width);
    // exact integer form of floor((i + 0.5) * h / out_h)
    let map = |i: usize, src: usize, dst: usize| ((2 * i + 1) * src / (2 * dst)).min(src - 1);
    Ok(image.remap(out_h, out_w, |r, c| (map(r, h, out_h), map(c, w, out_w))))
}

/// Raw 8-bit image to real intensities `raw / 255`.
pub fn normalize(image: &GrayImage) -> Result<GrayImage> {
    match &image.pixels {
        Pixels::Raw(v) => GrayImage::from_normalized(
            image.height,
            image.width,
            v.iter().map(|&p| p as f64 / 255.0).collect(),
        ),
        Pixels::Normalized(_) => Err(Error::InvalidState("image is already normalized".into())),
    }
}
