//! In-memory images and the pixel-domain conventions shared by encryption
//! and inference.
//!
//! Pixels live in `[0, 1]` in a `C×H×W` tensor. Values loaded from 8-bit
//! sources sit on the 1/255 grid.

use alloc::format;
use alloc::vec::Vec;

use crate::tensor::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    pixels: Tensor,
}

/// The canonical `f32` for 8-bit level `b`.
pub fn level_to_value(b: u8) -> f32 {
    b as f32 / 255.0
}

/// Nearest 8-bit level, rounding half away from zero.
pub fn value_to_level(v: f32) -> u8 {
    libm::roundf(v.clamp(0.0, 1.0) * 255.0) as u8
}

/// Snaps `v` onto the 1/255 grid.
pub fn quantize(v: f32) -> f32 {
    level_to_value(value_to_level(v))
}

/// `1 - v`. Canonical grid values map to the canonical grid value of the
/// complementary level, so applying it twice is the identity; `f32`
/// subtraction alone does not give that for most levels below 128.
pub fn complement(v: f32) -> f32 {
    let level = value_to_level(v);
    if level_to_value(level) == v {
        level_to_value(255 - level)
    } else {
        1.0 - v
    }
}

/// `(v - 0.5) / 0.5`.
pub fn normalize_value(v: f32) -> f32 {
    (v - 0.5) / 0.5
}

impl Image {
    /// `pixels` is `C×H×W` row-major.
    pub fn new(width: usize, height: usize, channels: usize, pixels: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 || !(channels == 1 || channels == 3) {
            return Err(Error::InvalidDimensions(format!(
                "{width}x{height} with {channels} channels"
            )));
        }
        let pixels = Tensor::new(&[channels, height, width], pixels)?;
        Ok(Self {
            width,
            height,
            channels,
            pixels,
        })
    }

    /// All pixels set to `value`.
    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Result<Self> {
        Self::new(
            width,
            height,
            channels,
            alloc::vec![value; width * height * channels],
        )
    }

    /// Builds an image from 8-bit levels laid out `C×H×W`.
    pub fn from_levels(width: usize, height: usize, channels: usize, levels: &[u8]) -> Result<Self> {
        Self::new(
            width,
            height,
            channels,
            levels.iter().map(|&b| level_to_value(b)).collect(),
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &Tensor {
        &self.pixels
    }

    pub fn data(&self) -> &[f32] {
        self.pixels.data()
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.pixels.data()[(c * self.height + y) * self.width + x]
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
        let (h, w) = (self.height, self.width);
        self.pixels.data_mut()[(c * h + y) * w + x] = v;
    }

    /// True when every value is a canonical 1/255 grid value.
    pub fn is_quantized(&self) -> bool {
        self.data().iter().all(|&v| quantize(v) == v)
    }

    pub fn to_levels(&self) -> Vec<u8> {
        self.data().iter().map(|&v| value_to_level(v)).collect()
    }
}

/// Elementwise `(v - 0.5) / 0.5`; the only normalization the model applies.
pub fn normalize(img: &Image) -> Tensor {
    img.pixels.map(normalize_value)
}

/// Nearest-neighbour resize: source index `floor(dst * src_size / dst_size)`.
pub fn resize_nearest(img: &Image, new_width: usize, new_height: usize) -> Result<Image> {
    if new_width == 0 || new_height == 0 {
        return Err(Error::InvalidDimensions(format!(
            "resize target {new_width}x{new_height}"
        )));
    }
    let mut out = Vec::with_capacity(img.channels * new_width * new_height);
    for c in 0..img.channels {
        for y in 0..new_height {
            let sy = y * img.height / new_height;
            for x in 0..new_width {
                let sx = x * img.width / new_width;
                out.push(img.get(c, sy, sx));
            }
        }
    }
    Image::new(new_width, new_height, img.channels, out)
}
