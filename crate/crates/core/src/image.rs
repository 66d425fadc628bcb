//! RGB images with unit-range channel values.

use std::io::Cursor;
use std::path::Path;

use image::{ImageFormat, RgbImage};

use crate::error::{GenMixError, Result};
use crate::scalar::{quantize_u8, Scalar};

pub const CHANNELS: usize = 3;

/// Row-major, channel-interleaved RGB image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuf<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Scalar> ImageBuf<T> {
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(GenMixError::EmptyImage { width, height });
        }
        if data.len() != width * height * CHANNELS {
            return Err(GenMixError::DimensionMismatch {
                expected: (width, height),
                actual: (data.len() / CHANNELS, 1),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: T) -> Result<Self> {
        Self::new(width, height, vec![value; width * height * CHANNELS])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * CHANNELS);
        for y in 0..height {
            for x in 0..width {
                for c in 0..CHANNELS {
                    data.push(f(x, y, c));
                }
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// `(width, height)`
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> T {
        self.data[(y * self.width + x) * CHANNELS + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: T) {
        self.data[(y * self.width + x) * CHANNELS + c] = v;
    }

    pub fn ensure_same_dims<U>(&self, other: &ImageBuf<U>) -> Result<()> {
        if self.dims() != (other.width, other.height) {
            return Err(GenMixError::DimensionMismatch {
                expected: self.dims(),
                actual: (other.width, other.height),
            });
        }
        Ok(())
    }

    pub fn map(&self, mut f: impl FnMut(T) -> T) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> ImageBuf<U> {
        ImageBuf {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .map(|v| U::from_f64(v.to_f64().unwrap_or(0.0)).unwrap_or_else(U::zero))
                .collect(),
        }
    }

    pub fn from_rgb8(img: &RgbImage) -> Result<Self> {
        let (w, h) = img.dimensions();
        let max = T::lit(255.0);
        let data = img
            .as_raw()
            .iter()
            .map(|&v| T::lit(v as f64) / max)
            .collect();
        Self::new(w as usize, h as usize, data)
    }

    /// 8-bit RGB with round-half-to-even quantization.
    pub fn to_rgb8(&self) -> RgbImage {
        let raw: Vec<u8> = self.data.iter().map(|&v| quantize_u8(v)).collect();
        RgbImage::from_raw(self.width as u32, self.height as u32, raw)
            .expect("buffer length matches dimensions")
    }

    pub fn to_png_bytes(&self) -> Vec<u8> {
        let mut out = Cursor::new(Vec::new());
        self.to_rgb8()
            .write_to(&mut out, ImageFormat::Png)
            .expect("in-memory PNG encoding cannot fail");
        out.into_inner()
    }

    pub fn from_encoded_bytes(bytes: &[u8]) -> Result<Self> {
        let decoded = image::load_from_memory(bytes).map_err(|e| GenMixError::ImageDecode {
            path: "<memory>".into(),
            message: e.to_string(),
        })?;
        Self::from_rgb8(&decoded.to_rgb8())
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, self.to_png_bytes())?;
        Ok(())
    }

    /// Bilinear resize with half-pixel centers and edge clamping.
    ///
    /// Resizing to the current dimensions returns an identical copy.
    pub fn resize_bilinear(&self, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(GenMixError::EmptyImage { width, height });
        }
        if (width, height) == self.dims() {
            return Ok(self.clone());
        }
        let xs = axis_taps::<T>(self.width, width);
        let ys = axis_taps::<T>(self.height, height);
        let mut data = Vec::with_capacity(width * height * CHANNELS);
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                for c in 0..CHANNELS {
                    let top = lerp(self.get(x0, y0, c), self.get(x1, y0, c), fx);
                    let bottom = lerp(self.get(x0, y1, c), self.get(x1, y1, c), fx);
                    data.push(lerp(top, bottom, fy).clamp_unit());
                }
            }
        }
        Self::new(width, height, data)
    }
}

#[inline]
fn lerp<T: Scalar>(a: T, b: T, t: T) -> T {
    a + (b - a) * t
}

fn axis_taps<T: Scalar>(src: usize, dst: usize) -> Vec<(usize, usize, T)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|d| {
            let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, T::lit(s - i0 as f64))
        })
        .collect()
}

/// Load an image file as unit-range RGB.
///
/// Grayscale is promoted to three channels and any alpha channel is dropped.
pub fn image_load_normalize<T: Scalar>(path: &Path) -> Result<ImageBuf<T>> {
    let decoded = image::ImageReader::open(path)
        .map_err(|e| GenMixError::ImageDecode {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?
        .with_guessed_format()
        .map_err(|e| GenMixError::ImageDecode {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?
        .decode()
        .map_err(|e| GenMixError::ImageDecode {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    ImageBuf::from_rgb8(&decoded.to_rgb8())
}

/// Header-only check that `path` is a decodable image with positive extent.
pub fn probe_image(path: &Path) -> Result<(usize, usize)> {
    let err = |message: String| GenMixError::ImageDecode {
        path: path.to_path_buf(),
        message,
    };
    let (w, h) = image::ImageReader::open(path)
        .map_err(|e| err(e.to_string()))?
        .with_guessed_format()
        .map_err(|e| err(e.to_string()))?
        .into_dimensions()
        .map_err(|e| err(e.to_string()))?;
    if w == 0 || h == 0 {
        return Err(GenMixError::EmptyImage {
            width: w as usize,
            height: h as usize,
        });
    }
    Ok((w as usize, h as usize))
}
