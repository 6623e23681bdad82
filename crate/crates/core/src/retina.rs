//! Log-polar sampling lattices and the forward/inverse retinotopic mapping.
//!
//! A grid row is a log2-eccentricity, a grid column an azimuth measured from
//! `+x` toward `+y` (downward). Rows are uniform in `log2 rho`, so a zoom
//! about the fixation point becomes a row shift and a rotation a circular
//! column shift.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::TAU;

use crate::{Error, ImageBuffer, Result};

pub const DEFAULT_N_RHO: usize = 224;
pub const DEFAULT_N_THETA: usize = 224;
pub const DEFAULT_LOG_RMIN: f64 = -5.0;
pub const DEFAULT_LOG_RMAX: f64 = 0.0;
/// Mid-gray.
pub const DEFAULT_FILL: f32 = 0.5;

/// Center of gaze in normalized coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixationPoint {
    x: f64,
    y: f64,
}

impl FixationPoint {
    pub const CENTER: FixationPoint = FixationPoint { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Result<Self> {
        let ok = |v: f64| v.is_finite() && (-1.0..=1.0).contains(&v);
        if !(ok(x) && ok(y)) {
            return Err(Error::InvalidParameter(format!(
                "fixation ({x}, {y}) outside [-1, 1]^2"
            )));
        }
        Ok(Self { x, y })
    }

    #[inline]
    pub fn x(&self) -> f64 {
        self.x
    }

    #[inline]
    pub fn y(&self) -> f64 {
        self.y
    }
}

impl Default for FixationPoint {
    fn default() -> Self {
        Self::CENTER
    }
}

/// `(log2 eccentricity, azimuth in [0, 2pi))` of `(x, y)` about `fixation`.
pub fn logpolar_coords(x: f64, y: f64, fixation: FixationPoint) -> Result<(f64, f64)> {
    let dx = x - fixation.x;
    let dy = y - fixation.y;
    let r2 = dx * dx + dy * dy;
    if r2 == 0.0 {
        return Err(Error::DegeneratePoint);
    }
    Ok((0.5 * libm::log2(r2), wrap_azimuth(libm::atan2(dy, dx))))
}

#[inline]
fn wrap_azimuth(theta: f64) -> f64 {
    let t = if theta < 0.0 { theta + TAU } else { theta };
    if t >= TAU {
        0.0
    } else {
        t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogPolarGrid {
    n_rho: usize,
    n_theta: usize,
    log_rmin: f64,
    log_rmax: f64,
    fixation: FixationPoint,
    rows: Vec<f64>,
    cols: Vec<f64>,
}

impl LogPolarGrid {
    pub fn new(
        n_rho: usize,
        n_theta: usize,
        log_rmin: f64,
        log_rmax: f64,
        fixation: FixationPoint,
    ) -> Result<Self> {
        if n_rho < 2 || n_theta < 2 {
            return Err(Error::InvalidParameter(format!(
                "grid needs at least 2x2 samples, got {n_rho}x{n_theta}"
            )));
        }
        if !(log_rmin.is_finite() && log_rmax.is_finite() && log_rmin < log_rmax) {
            return Err(Error::InvalidParameter(format!(
                "log radii must satisfy log_rmin < log_rmax, got [{log_rmin}, {log_rmax}]"
            )));
        }
        let step = (log_rmax - log_rmin) / (n_rho - 1) as f64;
        let mut rows: Vec<f64> = (0..n_rho).map(|i| log_rmin + i as f64 * step).collect();
        rows[n_rho - 1] = log_rmax;
        let cols = (0..n_theta).map(|j| j as f64 * TAU / n_theta as f64).collect();
        Ok(Self { n_rho, n_theta, log_rmin, log_rmax, fixation, rows, cols })
    }

    /// 224 x 224 samples spanning eccentricities `2^-5 ..= 1`.
    pub fn standard(fixation: FixationPoint) -> Self {
        Self::new(DEFAULT_N_RHO, DEFAULT_N_THETA, DEFAULT_LOG_RMIN, DEFAULT_LOG_RMAX, fixation)
            .expect("default grid parameters are valid")
    }

    pub fn n_rho(&self) -> usize {
        self.n_rho
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn log_rmin(&self) -> f64 {
        self.log_rmin
    }

    pub fn log_rmax(&self) -> f64 {
        self.log_rmax
    }

    pub fn fixation(&self) -> FixationPoint {
        self.fixation
    }

    /// Log2 radii, one per output row.
    pub fn rows(&self) -> &[f64] {
        &self.rows
    }

    /// Azimuths, one per output column.
    pub fn cols(&self) -> &[f64] {
        &self.cols
    }

    /// Same lattice about another fixation point.
    pub fn with_fixation(&self, fixation: FixationPoint) -> Self {
        Self { fixation, ..self.clone() }
    }

    /// Ratio between consecutive radii.
    pub fn radial_ratio(&self) -> f64 {
        libm::exp2((self.log_rmax - self.log_rmin) / (self.n_rho - 1) as f64)
    }

    /// Normalized Cartesian location of cell `(row, col)`.
    #[inline]
    pub fn cell_location(&self, row: usize, col: usize) -> (f64, f64) {
        let r = libm::exp2(self.rows[row]);
        let (s, c) = libm::sincos(self.cols[col]);
        (self.fixation.x + r * c, self.fixation.y + r * s)
    }

    /// All cell locations in row-major order.
    pub fn sample_points(&self) -> Vec<(f64, f64)> {
        let mut pts = Vec::with_capacity(self.n_rho * self.n_theta);
        for i in 0..self.n_rho {
            for j in 0..self.n_theta {
                pts.push(self.cell_location(i, j));
            }
        }
        pts
    }
}

/// Validated grid construction; see [`LogPolarGrid::new`].
pub fn build_grid(
    n_rho: usize,
    n_theta: usize,
    log_rmin: f64,
    log_rmax: f64,
    fixation: FixationPoint,
) -> Result<LogPolarGrid> {
    LogPolarGrid::new(n_rho, n_theta, log_rmin, log_rmax, fixation)
}

/// Bilinear samples at normalized points, `channels` values per point.
/// Pixel neighbors outside the raster contribute `fill`.
pub fn sample_bilinear(image: &ImageBuffer, points: &[(f64, f64)], fill: f32) -> Vec<f32> {
    let ch = image.channels();
    let mut out = alloc::vec![0.0f32; points.len() * ch];
    for (&(x, y), dst) in points.iter().zip(out.chunks_exact_mut(ch)) {
        let (c, r) = image.to_pixel_coords(x, y);
        image.sample_pixel(c, r, fill, dst);
    }
    out
}

/// Cartesian raster to an `n_rho x n_theta` log-polar raster.
pub fn to_logpolar(image: &ImageBuffer, grid: &LogPolarGrid, fill: f32) -> ImageBuffer {
    let trig: Vec<(f64, f64)> = grid.cols.iter().map(|&t| libm::sincos(t)).collect();
    let radii: Vec<f64> = grid.rows.iter().map(|&l| libm::exp2(l)).collect();
    let fx = grid.fixation.x;
    let fy = grid.fixation.y;
    ImageBuffer::from_pixels(grid.n_rho, grid.n_theta, image.channels(), |i, j, px| {
        let (s, c) = trig[j];
        let (col, row) = image.to_pixel_coords(fx + radii[i] * c, fy + radii[i] * s);
        image.sample_pixel(col, row, fill, px);
    })
}

/// Reconstructs an `out_height x out_width` Cartesian raster from a
/// log-polar one. Outside the outer radius pixels get `fill`; inside the
/// inner radius they take the innermost ring.
pub fn from_logpolar(
    lp: &ImageBuffer,
    grid: &LogPolarGrid,
    out_height: usize,
    out_width: usize,
    fill: f32,
) -> Result<ImageBuffer> {
    if lp.dims() != (grid.n_rho, grid.n_theta) {
        return Err(Error::ShapeMismatch { expected: (grid.n_rho, grid.n_theta), found: lp.dims() });
    }
    if out_height == 0 || out_width == 0 {
        return Err(Error::InvalidParameter(format!(
            "output size {out_height}x{out_width}"
        )));
    }
    let ch = lp.channels();
    let row_scale = (grid.n_rho - 1) as f64 / (grid.log_rmax - grid.log_rmin);
    let col_scale = grid.n_theta as f64 / TAU;
    let last_row = (grid.n_rho - 1) as f64;
    let frame = ImageBuffer::filled(out_height, out_width, 1, 0.0);
    Ok(ImageBuffer::from_pixels(out_height, out_width, ch, |r, c, px| {
        let (x, y) = frame.pixel_center(r, c);
        let (rho, theta) = logpolar_coords(x, y, grid.fixation).unwrap_or((f64::NEG_INFINITY, 0.0));
        if rho > grid.log_rmax {
            px.fill(fill);
            return;
        }
        let fr = ((rho - grid.log_rmin) * row_scale).clamp(0.0, last_row);
        let fc = theta * col_scale;
        let r0 = libm::floor(fr) as usize;
        let r1 = (r0 + 1).min(grid.n_rho - 1);
        let wr = (fr - r0 as f64) as f32;
        let c0f = libm::floor(fc);
        let wc = (fc - c0f) as f32;
        let c0 = (c0f as usize) % grid.n_theta;
        let c1 = (c0 + 1) % grid.n_theta;
        let (p00, p01, p10, p11) = (lp.pixel(r0, c0), lp.pixel(r0, c1), lp.pixel(r1, c0), lp.pixel(r1, c1));
        for k in 0..ch {
            px[k] = (1.0 - wr) * ((1.0 - wc) * p00[k] + wc * p01[k])
                + wr * ((1.0 - wc) * p10[k] + wc * p11[k]);
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::{FRAC_PI_2, PI};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn coords_examples() {
        let c = FixationPoint::CENTER;
        assert_eq!(logpolar_coords(1.0, 0.0, c).unwrap(), (0.0, 0.0));
        let (rho, theta) = logpolar_coords(0.0, libm::exp2(-5.0), c).unwrap();
        assert!(close(rho, -5.0, 1e-12) && close(theta, FRAC_PI_2, 1e-12));
        let (rho, theta) = logpolar_coords(-0.5, 0.0, c).unwrap();
        assert!(close(rho, -1.0, 1e-12) && close(theta, PI, 1e-12));
        assert_eq!(logpolar_coords(0.0, 0.0, c), Err(Error::DegeneratePoint));
        let off = FixationPoint::new(0.25, -0.5).unwrap();
        assert_eq!(logpolar_coords(0.25, -0.5, off), Err(Error::DegeneratePoint));
    }

    #[test]
    fn azimuth_stays_below_two_pi() {
        let (_, theta) = logpolar_coords(1.0, -1e-300, FixationPoint::CENTER).unwrap();
        assert!((0.0..TAU).contains(&theta));
    }

    #[test]
    fn fixation_bounds() {
        assert!(FixationPoint::new(1.0, -1.0).is_ok());
        assert!(FixationPoint::new(1.01, 0.0).is_err());
        assert!(FixationPoint::new(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn small_grid_spacing() {
        let g = build_grid(4, 4, -5.0, 0.0, FixationPoint::CENTER).unwrap();
        let want = [-5.0, -10.0 / 3.0, -5.0 / 3.0, 0.0];
        for (a, b) in g.rows().iter().zip(want) {
            assert!(close(*a, b, 1e-12));
        }
        let want = [0.0, FRAC_PI_2, PI, 3.0 * FRAC_PI_2];
        for (a, b) in g.cols().iter().zip(want) {
            assert!(close(*a, b, 1e-12));
        }
    }

    #[test]
    fn standard_grid_constants() {
        let g = LogPolarGrid::standard(FixationPoint::CENTER);
        assert_eq!((g.n_rho(), g.n_theta()), (224, 224));
        assert_eq!(g.rows()[0], -5.0);
        assert_eq!(g.rows()[223], 0.0);
        assert!(g.rows().windows(2).all(|w| w[0] < w[1]));
        assert_eq!(g.cols()[0], 0.0);
        assert!(g.cols()[223] < TAU);
    }

    #[test]
    fn invalid_grids() {
        let c = FixationPoint::CENTER;
        assert!(matches!(build_grid(2, 2, 0.0, 0.0, c), Err(Error::InvalidParameter(_))));
        assert!(build_grid(1, 4, -5.0, 0.0, c).is_err());
        assert!(build_grid(4, 1, -5.0, 0.0, c).is_err());
        assert!(build_grid(4, 4, 0.0, -1.0, c).is_err());
        assert!(build_grid(4, 4, f64::NEG_INFINITY, 0.0, c).is_err());
    }

    #[test]
    fn constant_image_maps_to_constant() {
        let img = ImageBuffer::filled(40, 40, 3, 0.5);
        let g = build_grid(16, 24, -5.0, 0.0, FixationPoint::CENTER).unwrap();
        let lp = to_logpolar(&img, &g, 0.5);
        assert_eq!(lp.dims(), (16, 24));
        assert!(lp.data().iter().all(|&v| (v - 0.5).abs() < 1e-6));
        // With another fill only the outermost ring, which straddles the
        // raster edge, departs from the constant.
        let dark = ImageBuffer::filled(40, 40, 3, 0.3);
        let lp_dark = to_logpolar(&dark, &g, 0.9);
        for i in 0..15 {
            for j in 0..24 {
                assert!((lp_dark.get(i, j, 1) - 0.3).abs() < 1e-6, "({i}, {j})");
            }
        }
        let back = from_logpolar(&lp, &g, 40, 40, 0.9).unwrap();
        for r in 0..40 {
            for c in 0..40 {
                let (x, y) = back.pixel_center(r, c);
                let want = if x * x + y * y > 1.0 { 0.9 } else { 0.5 };
                assert!((back.get(r, c, 0) - want).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn half_plane_geometry() {
        let img = ImageBuffer::from_fn(64, 64, 1, |_, c, _| if c >= 32 { 1.0 } else { 0.0 });
        let g = build_grid(32, 32, -5.0, 0.0, FixationPoint::CENTER).unwrap();
        let lp = to_logpolar(&img, &g, 0.5);
        for i in 0..31 {
            assert!(lp.get(i, 0, 0) > 0.99, "row {i}");
            assert!(lp.get(i, 16, 0) < 0.01, "row {i}");
        }
    }

    #[test]
    fn inverse_shape_mismatch() {
        let g = build_grid(8, 8, -5.0, 0.0, FixationPoint::CENTER).unwrap();
        let lp = ImageBuffer::filled(8, 9, 1, 0.0);
        assert!(matches!(from_logpolar(&lp, &g, 4, 4, 0.5), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn inner_disk_uses_first_ring() {
        let g = build_grid(8, 4, -2.0, 0.0, FixationPoint::CENTER).unwrap();
        let lp = ImageBuffer::from_fn(8, 4, 1, |r, _, _| if r == 0 { 0.8 } else { 0.1 });
        // 1x1 output: its only pixel sits on the fixation point.
        let out = from_logpolar(&lp, &g, 1, 1, 0.0).unwrap();
        assert!((out.get(0, 0, 0) - 0.8).abs() < 1e-6);
    }

    #[test]
    fn acuity_decreases_outward() {
        let g = LogPolarGrid::standard(FixationPoint::CENTER);
        let step = TAU / g.n_theta() as f64;
        let arcs: Vec<f64> = g.rows().iter().map(|&l| libm::exp2(l) * step).collect();
        assert!(arcs.windows(2).all(|w| w[0] < w[1]));
        assert!(close(g.radial_ratio(), libm::exp2(5.0 / 223.0), 1e-12));
    }
}
