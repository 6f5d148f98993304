//! 8-bit raster images (1-channel NIR or 3-channel RGB) with the sampling,
//! geometry, and photometric primitives used by cropping and augmentation.
//!
//! All fractional sampling is bilinear with clamped (edge-replicating)
//! coordinates, and all arithmetic runs in f64 before rounding back to u8,
//! so results are bitwise reproducible across runs.

use std::path::Path;

use crate::error::{Error, Result};

/// Interleaved row-major image buffer, `channels` ∈ {1, 3}.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

impl Raster {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        assert!(channels == 1 || channels == 3, "channels must be 1 or 3");
        assert!(width > 0 && height > 0, "zero-sized raster");
        Raster {
            width,
            height,
            channels,
            data: vec![0; width * height * channels],
        }
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> u8,
    ) -> Self {
        let mut out = Raster::new(width, height, channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    let v = f(x, y, c);
                    out.data[(y * width + x) * channels + c] = v;
                }
            }
        }
        out
    }

    /// Loads an image and converts it to the requested channel count
    /// (1 → grayscale, 3 → RGB). PNG, JPEG, and BMP are accepted.
    pub fn load(path: &Path, channels: usize) -> Result<Self> {
        let img = image::open(path).map_err(|e| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let (width, height, data) = match channels {
            1 => {
                let g = img.to_luma8();
                (g.width() as usize, g.height() as usize, g.into_raw())
            }
            3 => {
                let rgb = img.to_rgb8();
                (rgb.width() as usize, rgb.height() as usize, rgb.into_raw())
            }
            other => {
                return Err(Error::InvalidValue(format!(
                    "unsupported channel count {other}"
                )))
            }
        };
        Ok(Raster {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let err = |e: image::ImageError| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        match self.channels {
            1 => image::GrayImage::from_raw(self.width as u32, self.height as u32, self.data.clone())
                .expect("buffer sized to dimensions")
                .save(path)
                .map_err(err),
            3 => image::RgbImage::from_raw(self.width as u32, self.height as u32, self.data.clone())
                .expect("buffer sized to dimensions")
                .save(path)
                .map_err(err),
            _ => unreachable!("constructor enforces channels"),
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> u8 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: u8) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    /// Pixel access with coordinates clamped to the image bounds, which
    /// makes out-of-range reads replicate the nearest edge pixel.
    #[inline]
    pub fn get_clamped(&self, x: i64, y: i64, c: usize) -> u8 {
        let xc = x.clamp(0, self.width as i64 - 1) as usize;
        let yc = y.clamp(0, self.height as i64 - 1) as usize;
        self.get(xc, yc, c)
    }

    /// Bilinear sample at fractional coordinates, edges replicated.
    pub fn sample_bilinear(&self, x: f64, y: f64, c: usize) -> f64 {
        let x0 = x.floor();
        let y0 = y.floor();
        let dx = x - x0;
        let dy = y - y0;
        let xi = x0 as i64;
        let yi = y0 as i64;
        let p00 = self.get_clamped(xi, yi, c) as f64;
        let p10 = self.get_clamped(xi + 1, yi, c) as f64;
        let p01 = self.get_clamped(xi, yi + 1, c) as f64;
        let p11 = self.get_clamped(xi + 1, yi + 1, c) as f64;
        let top = p00 + (p10 - p00) * dx;
        let bottom = p01 + (p11 - p01) * dx;
        top + (bottom - top) * dy
    }

    /// Bilinear resize. Destination pixel centers map to source coordinates
    /// via `src = (dst + 0.5) * scale - 0.5` (half-pixel convention), sampled
    /// with edge replication.
    pub fn resize_bilinear(&self, new_width: usize, new_height: usize) -> Raster {
        assert!(new_width > 0 && new_height > 0);
        if new_width == self.width && new_height == self.height {
            return self.clone();
        }
        let sx = self.width as f64 / new_width as f64;
        let sy = self.height as f64 / new_height as f64;
        Raster::from_fn(new_width, new_height, self.channels, |x, y, c| {
            let src_x = (x as f64 + 0.5) * sx - 0.5;
            let src_y = (y as f64 + 0.5) * sy - 0.5;
            clamp_u8(self.sample_bilinear(src_x, src_y, c))
        })
    }

    pub fn flip_horizontal(&self) -> Raster {
        Raster::from_fn(self.width, self.height, self.channels, |x, y, c| {
            self.get(self.width - 1 - x, y, c)
        })
    }

    /// Rotate by `degrees` counter-clockwise about the image center,
    /// bilinear, with edge replication filling the uncovered corners.
    pub fn rotate(&self, degrees: f64) -> Raster {
        if degrees == 0.0 {
            return self.clone();
        }
        let theta = degrees.to_radians();
        let (sin_t, cos_t) = theta.sin_cos();
        let cx = (self.width as f64 - 1.0) / 2.0;
        let cy = (self.height as f64 - 1.0) / 2.0;
        Raster::from_fn(self.width, self.height, self.channels, |x, y, c| {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            // Inverse map: rotate the output grid back into the source.
            // Screen coordinates put y downward, hence the sign pattern.
            let src_x = cx + dx * cos_t - dy * sin_t;
            let src_y = cy + dx * sin_t + dy * cos_t;
            clamp_u8(self.sample_bilinear(src_x, src_y, c))
        })
    }

    /// Scale intensities by `factor` (1.0 = identity, 0.0 = black).
    pub fn adjust_brightness(&self, factor: f64) -> Raster {
        if factor == 1.0 {
            return self.clone();
        }
        let mut out = self.clone();
        for v in &mut out.data {
            *v = clamp_u8(*v as f64 * factor);
        }
        out
    }

    /// Blend between the image mean (factor 0) and the original (factor 1);
    /// factors above 1 stretch contrast about the mean.
    pub fn adjust_contrast(&self, factor: f64) -> Raster {
        if factor == 1.0 {
            return self.clone();
        }
        let mean = self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64;
        let mut out = self.clone();
        for v in &mut out.data {
            *v = clamp_u8(mean + (*v as f64 - mean) * factor);
        }
        out
    }

    /// Blend between a 3×3 box-blurred copy (factor 0) and the original
    /// (factor 1); factors above 1 sharpen by extrapolation.
    pub fn adjust_sharpness(&self, factor: f64) -> Raster {
        if factor == 1.0 {
            return self.clone();
        }
        Raster::from_fn(self.width, self.height, self.channels, |x, y, c| {
            let mut sum = 0.0;
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    sum += self.get_clamped(x as i64 + dx, y as i64 + dy, c) as f64;
                }
            }
            let smooth = sum / 9.0;
            clamp_u8(smooth + (self.get(x, y, c) as f64 - smooth) * factor)
        })
    }

    /// Channel-first f64 view scaled to [0, 1], the model input layout.
    pub fn to_chw_f64(&self) -> ndarray::Array3<f64> {
        let mut out = ndarray::Array3::zeros((self.channels, self.height, self.width));
        for y in 0..self.height {
            for x in 0..self.width {
                for c in 0..self.channels {
                    out[[c, y, x]] = self.get(x, y, c) as f64 / 255.0;
                }
            }
        }
        out
    }
}

#[inline]
pub(crate) fn clamp_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}
