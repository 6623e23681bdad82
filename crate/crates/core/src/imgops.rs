//! Geometric operations about a fixation point, plus cropping and resizing.
//!
//! Rotation and zoom pull every output pixel back through the inverse map
//! and sample bilinearly; a zero rotation or unit zoom reproduces the input
//! bit for bit.

use alloc::format;

use crate::{Error, FixationPoint, ImageBuffer, Result};

pub const MIN_ZOOM: f64 = 0.05;
pub const MAX_ZOOM: f64 = 20.0;
/// Smallest fixation sample side as a fraction of the full extent.
pub const DEFAULT_MIN_RATIO: f64 = 0.1;

/// Axis-aligned box in normalized coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl BoundingBox {
    pub const FULL: BoundingBox = BoundingBox { x_min: -1.0, y_min: -1.0, x_max: 1.0, y_max: 1.0 };

    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let inside = |v: f64| v.is_finite() && (-1.0..=1.0).contains(&v);
        if !(inside(x_min) && inside(y_min) && inside(x_max) && inside(y_max)) {
            return Err(Error::InvalidParameter(format!(
                "box ({x_min}, {y_min})-({x_max}, {y_max}) leaves [-1, 1]^2"
            )));
        }
        if !(x_min < x_max && y_min < y_max) {
            return Err(Error::InvalidParameter(format!(
                "box ({x_min}, {y_min})-({x_max}, {y_max}) is empty or inverted"
            )));
        }
        Ok(Self { x_min, y_min, x_max, y_max })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }
    pub fn y_min(&self) -> f64 {
        self.y_min
    }
    pub fn x_max(&self) -> f64 {
        self.x_max
    }
    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))
    }

    /// Closed-boundary containment.
    #[inline]
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }
}

/// Samples every output pixel at `image` pixel coordinates
/// `(col + dc, row + dr)` where `offset(col, row)` returns `(dc, dr)`.
fn warp_by_offset(
    image: &ImageBuffer,
    fill: f32,
    offset: impl Fn(f64, f64) -> (f64, f64),
) -> ImageBuffer {
    let (h, w) = image.dims();
    ImageBuffer::from_pixels(h, w, image.channels(), |r, c, px| {
        let (cf, rf) = (c as f64, r as f64);
        let (dc, dr) = offset(cf, rf);
        image.sample_pixel(cf + dc, rf + dr, fill, px);
    })
}

/// Rotates content about `fixation`: what sat at azimuth `t` ends up at `t + angle`.
pub fn rotate_about_fixation(
    image: &ImageBuffer,
    fixation: FixationPoint,
    angle: f64,
    fill: f32,
) -> ImageBuffer {
    let (sin, cos) = libm::sincos(angle);
    let half_w = image.width() as f64 * 0.5;
    let half_h = image.height() as f64 * 0.5;
    let (fc, fr) = image.to_pixel_coords(fixation.x(), fixation.y());
    warp_by_offset(image, fill, |c, r| {
        let dx = (c - fc) / half_w;
        let dy = (r - fr) / half_h;
        // Inverse rotation, expressed as a displacement so angle 0 is exact.
        let ddx = dx * (cos - 1.0) + dy * sin;
        let ddy = -dx * sin + dy * (cos - 1.0);
        (ddx * half_w, ddy * half_h)
    })
}

/// Scales content about `fixation`: radius `r` moves to `factor * r`.
pub fn zoom_about_fixation(
    image: &ImageBuffer,
    fixation: FixationPoint,
    factor: f64,
    fill: f32,
) -> Result<ImageBuffer> {
    if !(MIN_ZOOM..=MAX_ZOOM).contains(&factor) {
        return Err(Error::InvalidParameter(format!(
            "zoom factor {factor} outside [{MIN_ZOOM}, {MAX_ZOOM}]"
        )));
    }
    let k = 1.0 / factor - 1.0;
    let (fc, fr) = image.to_pixel_coords(fixation.x(), fixation.y());
    Ok(warp_by_offset(image, fill, |c, r| ((c - fc) * k, (r - fr) * k)))
}

/// Wrap-around integer shift: input `(i, j)` moves to `((i + dy) mod H, (j + dx) mod W)`.
pub fn roll_translate(image: &ImageBuffer, dx: isize, dy: isize) -> ImageBuffer {
    let (h, w) = image.dims();
    let sx = dx.rem_euclid(w as isize) as usize;
    let sy = dy.rem_euclid(h as isize) as usize;
    ImageBuffer::from_pixels(h, w, image.channels(), |r, c, px| {
        let src_r = (r + h - sy) % h;
        let src_c = (c + w - sx) % w;
        px.copy_from_slice(image.pixel(src_r, src_c));
    })
}

/// Sets every pixel farther than `radius` from `fixation` to `fill`.
pub fn circular_mask(
    image: &ImageBuffer,
    fixation: FixationPoint,
    radius: f64,
    fill: f32,
) -> Result<ImageBuffer> {
    if radius.is_nan() || radius <= 0.0 {
        return Err(Error::InvalidParameter(format!("mask radius {radius} must be positive")));
    }
    let mut out = image.clone();
    let r2 = radius * radius;
    for row in 0..image.height() {
        for col in 0..image.width() {
            let (x, y) = image.pixel_center(row, col);
            let (dx, dy) = (x - fixation.x(), y - fixation.y());
            if dx * dx + dy * dy > r2 {
                out.pixel_mut(row, col).fill(fill.clamp(0.0, 1.0));
            }
        }
    }
    Ok(out)
}

/// Resamples the normalized rectangle `[x0, x1] x [y0, y1]` (which may leave
/// the raster) onto `out_h x out_w` pixels.
fn crop_region(
    image: &ImageBuffer,
    (x0, y0, x1, y1): (f64, f64, f64, f64),
    out_h: usize,
    out_w: usize,
    fill: f32,
) -> ImageBuffer {
    let left = (x0 + 1.0) * image.width() as f64 * 0.5;
    let top = (y0 + 1.0) * image.height() as f64 * 0.5;
    let sx = (x1 - x0) * image.width() as f64 * 0.5 / out_w as f64;
    let sy = (y1 - y0) * image.height() as f64 * 0.5 / out_h as f64;
    ImageBuffer::from_pixels(out_h, out_w, image.channels(), |r, c, px| {
        let col = left + (c as f64 + 0.5) * sx - 0.5;
        let row = top + (r as f64 + 0.5) * sy - 0.5;
        image.sample_pixel(col, row, fill, px);
    })
}

fn raster_side(pixels: f64) -> usize {
    (libm::round(pixels) as usize).max(1)
}

/// Smallest square (in pixels) containing `bbox`, centered on the box center.
/// Parts of the square beyond the raster are `fill`.
pub fn focus_crop(image: &ImageBuffer, bbox: &BoundingBox, fill: f32) -> ImageBuffer {
    let (w, h) = (image.width() as f64, image.height() as f64);
    let side_px = ((bbox.x_max - bbox.x_min) * w * 0.5).max((bbox.y_max - bbox.y_min) * h * 0.5);
    let (cx, cy) = bbox.center();
    let half_x = side_px / w;
    let half_y = side_px / h;
    let n = raster_side(side_px);
    crop_region(image, (cx - half_x, cy - half_y, cx + half_x, cy + half_y), n, n, fill)
}

/// Normalized half-side of the square sampled around `fixation`: the
/// distance to the nearest edge, floored at `min_ratio` of the half extent.
pub fn fixation_half_side(fixation: FixationPoint, min_ratio: f64) -> f64 {
    let edge = (1.0 - fixation.x().abs()).min(1.0 - fixation.y().abs());
    edge.max(min_ratio)
}

/// Largest square centered on `fixation` that stays inside the frame, but
/// never smaller than `min_ratio` of the full extent. With `circular` the
/// square's inscribed disk is kept and the rest set to `fill`.
pub fn fixation_sample(
    image: &ImageBuffer,
    fixation: FixationPoint,
    min_ratio: f64,
    circular: bool,
    fill: f32,
) -> Result<ImageBuffer> {
    if !(min_ratio > 0.0 && min_ratio <= 1.0) {
        return Err(Error::InvalidParameter(format!("min_ratio {min_ratio} outside (0, 1]")));
    }
    let half = fixation_half_side(fixation, min_ratio);
    let (fx, fy) = (fixation.x(), fixation.y());
    let out_w = raster_side(half * image.width() as f64);
    let out_h = raster_side(half * image.height() as f64);
    let crop = crop_region(image, (fx - half, fy - half, fx + half, fy + half), out_h, out_w, fill);
    if circular {
        circular_mask(&crop, FixationPoint::CENTER, 1.0, fill)
    } else {
        Ok(crop)
    }
}

/// Bilinear resize using pixel-center alignment; border pixels are replicated.
pub fn resize(image: &ImageBuffer, out_h: usize, out_w: usize) -> Result<ImageBuffer> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidParameter(format!("resize target {out_h}x{out_w}")));
    }
    if image.dims() == (out_h, out_w) {
        return Ok(image.clone());
    }
    let sx = image.width() as f64 / out_w as f64;
    let sy = image.height() as f64 / out_h as f64;
    Ok(ImageBuffer::from_pixels(out_h, out_w, image.channels(), |r, c, px| {
        let col = (c as f64 + 0.5) * sx - 0.5;
        let row = (r as f64 + 0.5) * sy - 0.5;
        image.sample_pixel_clamped(col, row, px);
    }))
}
