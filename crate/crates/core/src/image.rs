//! Row-major, channel-interleaved rasters of unit-interval intensities.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl ImageBuffer {
    /// Wraps `data` after checking its length and that every sample lies in `[0, 1]`.
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidImage(format!("empty raster {height}x{width}")));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidImage(format!("{channels} channels, expected 1 or 3")));
        }
        if data.len() != height * width * channels {
            return Err(Error::InvalidImage(format!(
                "{} samples for a {height}x{width}x{channels} raster",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidImage(format!("intensity {bad} outside [0, 1]")));
        }
        Ok(Self { height, width, channels, data })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f32) -> Self {
        assert!(height > 0 && width > 0 && (channels == 1 || channels == 3));
        let value = value.clamp(0.0, 1.0);
        Self { height, width, channels, data: vec![value; height * width * channels] }
    }

    /// Builds a raster from `f(row, col, channel)`; results are clamped to `[0, 1]`.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        assert!(height > 0 && width > 0 && (channels == 1 || channels == 3));
        let mut data = Vec::with_capacity(height * width * channels);
        for row in 0..height {
            for col in 0..width {
                for ch in 0..channels {
                    data.push(clamp_unit(f(row, col, ch)));
                }
            }
        }
        Self { height, width, channels, data }
    }

    /// Builds a raster by filling each pixel's channel slice.
    pub(crate) fn from_pixels(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, &mut [f32]),
    ) -> Self {
        let mut data = vec![0.0; height * width * channels];
        for (idx, px) in data.chunks_exact_mut(channels).enumerate() {
            f(idx / width, idx % width, px);
            for v in px.iter_mut() {
                *v = clamp_unit(*v);
            }
        }
        Self { height, width, channels, data }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    /// `(height, width)`.
    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f32 {
        self.data[(row * self.width + col) * self.channels + channel]
    }

    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> &[f32] {
        let start = (row * self.width + col) * self.channels;
        &self.data[start..start + self.channels]
    }

    #[inline]
    pub(crate) fn pixel_mut(&mut self, row: usize, col: usize) -> &mut [f32] {
        let start = (row * self.width + col) * self.channels;
        &mut self.data[start..start + self.channels]
    }

    pub fn set(&mut self, row: usize, col: usize, channel: usize, value: f32) {
        let idx = (row * self.width + col) * self.channels + channel;
        self.data[idx] = clamp_unit(value);
    }

    /// Converts to three channels by replicating a gray channel.
    pub fn to_rgb(&self) -> ImageBuffer {
        if self.channels == 3 {
            return self.clone();
        }
        let data = self.data.iter().flat_map(|&v| [v, v, v]).collect();
        ImageBuffer { height: self.height, width: self.width, channels: 3, data }
    }

    /// Normalized center of pixel `(row, col)`.
    #[inline]
    pub fn pixel_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            (2 * col + 1) as f64 / self.width as f64 - 1.0,
            (2 * row + 1) as f64 / self.height as f64 - 1.0,
        )
    }

    /// Continuous pixel coordinates `(col, row)` of a normalized point; pixel
    /// centers land on integers.
    #[inline]
    pub fn to_pixel_coords(&self, x: f64, y: f64) -> (f64, f64) {
        (
            (x + 1.0) * self.width as f64 * 0.5 - 0.5,
            (y + 1.0) * self.height as f64 * 0.5 - 0.5,
        )
    }

    /// Bilinear blend of the four pixel centers around continuous pixel
    /// coordinates. Neighbors outside the raster contribute `fill`.
    #[inline]
    pub fn sample_pixel(&self, col: f64, row: f64, fill: f32, out: &mut [f32]) {
        if !(col.is_finite() && row.is_finite()) {
            out.fill(fill);
            return;
        }
        let c0f = libm::floor(col);
        let r0f = libm::floor(row);
        let fx = (col - c0f) as f32;
        let fy = (row - r0f) as f32;
        let w = self.width as f64;
        let h = self.height as f64;
        if c0f < -1.0 || r0f < -1.0 || c0f >= w || r0f >= h {
            out.fill(fill);
            return;
        }
        let c0 = c0f as isize;
        let r0 = r0f as isize;
        let weights = [(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy];
        let corners = [(r0, c0), (r0, c0 + 1), (r0 + 1, c0), (r0 + 1, c0 + 1)];
        out.fill(0.0);
        for (&(r, c), &wgt) in corners.iter().zip(weights.iter()) {
            if r >= 0 && c >= 0 && (r as usize) < self.height && (c as usize) < self.width {
                let px = self.pixel(r as usize, c as usize);
                for (o, &v) in out.iter_mut().zip(px) {
                    *o += wgt * v;
                }
            } else {
                for o in out.iter_mut() {
                    *o += wgt * fill;
                }
            }
        }
    }

    /// Bilinear blend with coordinates clamped to the raster (edge replication).
    #[inline]
    pub(crate) fn sample_pixel_clamped(&self, col: f64, row: f64, out: &mut [f32]) {
        let col = col.clamp(0.0, (self.width - 1) as f64);
        let row = row.clamp(0.0, (self.height - 1) as f64);
        let c0 = libm::floor(col) as usize;
        let r0 = libm::floor(row) as usize;
        let fx = (col - c0 as f64) as f32;
        let fy = (row - r0 as f64) as f32;
        let c1 = (c0 + 1).min(self.width - 1);
        let r1 = (r0 + 1).min(self.height - 1);
        let (p00, p01, p10, p11) =
            (self.pixel(r0, c0), self.pixel(r0, c1), self.pixel(r1, c0), self.pixel(r1, c1));
        for ch in 0..self.channels {
            out[ch] = (1.0 - fx) * (1.0 - fy) * p00[ch]
                + fx * (1.0 - fy) * p01[ch]
                + (1.0 - fx) * fy * p10[ch]
                + fx * fy * p11[ch];
        }
    }

    /// Mean absolute difference over all samples.
    pub fn mean_abs_diff(&self, other: &ImageBuffer) -> f64 {
        assert_eq!(self.data.len(), other.data.len());
        let total: f64 =
            self.data.iter().zip(&other.data).map(|(a, b)| libm::fabs((a - b) as f64)).sum();
        total / self.data.len() as f64
    }
}

#[inline]
fn clamp_unit(v: f32) -> f32 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}
