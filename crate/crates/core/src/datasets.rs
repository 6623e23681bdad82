//! Ground-truth masks from annotations, and a seeded synthetic scene
//! generator (three shapes in three colors on a noisy gray background).

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::f64::consts::{FRAC_1_SQRT_2, PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::imgops::BoundingBox;
use crate::localize::{fixation_grid, GroundTruthMask};
use crate::oracle::LabelSet;
use crate::{Error, ImageBuffer, Result};

pub const DEFAULT_KEYPOINT_THRESHOLD: f64 = 0.2;
pub const DEFAULT_SIGMA_COEFF: f64 = 0.15;
pub const MIN_SCENE_SCALE: f64 = 0.05;
pub const MAX_SCENE_SCALE: f64 = 0.5;
pub const DEFAULT_SCENE_SIZE: usize = 224;

/// One annotated image, coordinates normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationRecord {
    pub image_path: String,
    pub label: String,
    pub boxes: Vec<BoundingBox>,
    pub keypoints: Vec<(f64, f64)>,
}

/// Cells whose lattice point lies inside any box (closed boundaries).
pub fn bbox_mask(boxes: &[BoundingBox], n: usize) -> Result<GroundTruthMask> {
    let lattice = fixation_grid(n)?;
    let cells = lattice.iter().map(|p| boxes.iter().any(|b| b.contains(p.x(), p.y()))).collect();
    GroundTruthMask::new(n, cells)
}

/// Thresholded Gaussian heat map around keypoints.
///
/// The spread is `sigma_coeff` times the longer side of the keypoints'
/// bounding box (at least one lattice spacing). Point Gaussians combine by
/// max, the lattice samples are rescaled to peak at one, and a cell is set
/// when its value reaches `threshold`.
pub fn keypoint_mask(
    points: &[(f64, f64)],
    n: usize,
    sigma_coeff: f64,
    threshold: f64,
) -> Result<GroundTruthMask> {
    if points.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(sigma_coeff > 0.0 && sigma_coeff.is_finite()) {
        return Err(Error::InvalidParameter(format!("sigma coefficient {sigma_coeff}")));
    }
    let lattice = fixation_grid(n)?;
    let sigma = sigma_coeff * keypoint_extent(points).max(2.0 / (n - 1) as f64);
    // Work with log values so distant lattices do not underflow to zero.
    let log_heat: Vec<f64> = lattice
        .iter()
        .map(|p| {
            points
                .iter()
                .map(|&(kx, ky)| {
                    let d2 = (p.x() - kx) * (p.x() - kx) + (p.y() - ky) * (p.y() - ky);
                    -d2 / (2.0 * sigma * sigma)
                })
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let peak = log_heat.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let cells = log_heat.iter().map(|&l| libm::exp(l - peak) >= threshold).collect();
    GroundTruthMask::new(n, cells)
}

/// Longer side of the keypoints' bounding box.
pub fn keypoint_extent(points: &[(f64, f64)]) -> f64 {
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &(x, y) in points {
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    (x1 - x0).max(y1 - y0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Shape {
    Disk,
    Square,
    Triangle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Color {
    Red,
    Green,
    Blue,
}

impl Color {
    pub fn rgb(self) -> [f32; 3] {
        match self {
            Color::Red => [0.9, 0.15, 0.15],
            Color::Green => [0.15, 0.9, 0.15],
            Color::Blue => [0.15, 0.15, 0.9],
        }
    }
}

/// Shape-color class; index `shape * 3 + color`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SceneClass {
    pub shape: Shape,
    pub color: Color,
}

pub const SCENE_CLASS_COUNT: usize = 9;
const SHAPES: [Shape; 3] = [Shape::Disk, Shape::Square, Shape::Triangle];
const COLORS: [Color; 3] = [Color::Red, Color::Green, Color::Blue];

impl SceneClass {
    pub fn from_index(index: usize) -> Option<Self> {
        (index < SCENE_CLASS_COUNT).then(|| SceneClass { shape: SHAPES[index / 3], color: COLORS[index % 3] })
    }

    pub fn index(&self) -> usize {
        let s = SHAPES.iter().position(|&s| s == self.shape).unwrap_or(0);
        let c = COLORS.iter().position(|&c| c == self.color).unwrap_or(0);
        s * 3 + c
    }

    pub fn name(&self) -> String {
        let color = match self.color {
            Color::Red => "red",
            Color::Green => "green",
            Color::Blue => "blue",
        };
        let shape = match self.shape {
            Shape::Disk => "disk",
            Shape::Square => "square",
            Shape::Triangle => "triangle",
        };
        format!("{color}-{shape}")
    }

    pub fn all() -> impl Iterator<Item = SceneClass> {
        (0..SCENE_CLASS_COUNT).filter_map(SceneClass::from_index)
    }
}

/// `red-disk`, `green-disk`, ... in class-index order.
pub fn scene_labels() -> LabelSet {
    LabelSet::new(SceneClass::all().map(|c| c.name()).collect()).expect("nine distinct names")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneParams {
    pub class: SceneClass,
    pub center: (f64, f64),
    /// Circumradius of the shape, normalized.
    pub scale: f64,
    pub angle: f64,
    pub clutter: usize,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub image: ImageBuffer,
    pub class: SceneClass,
    pub center: (f64, f64),
    pub scale: f64,
    pub angle: f64,
    pub bbox: BoundingBox,
}

impl SyntheticScene {
    pub fn label(&self) -> usize {
        self.class.index()
    }
}

/// Polygon vertices (or `None` for the disk) in normalized coordinates.
fn shape_vertices(shape: Shape, center: (f64, f64), scale: f64, angle: f64) -> Option<Vec<(f64, f64)>> {
    let corners = match shape {
        Shape::Disk => return None,
        Shape::Square => 4,
        Shape::Triangle => 3,
    };
    // Triangles point up at angle 0 (y grows downward).
    let base = match shape {
        Shape::Triangle => -PI / 2.0,
        _ => PI / 4.0,
    };
    Some(
        (0..corners)
            .map(|k| {
                let a = base + angle + TAU * k as f64 / corners as f64;
                let (s, c) = libm::sincos(a);
                (center.0 + scale * c, center.1 + scale * s)
            })
            .collect(),
    )
}

fn inside_polygon(poly: &[(f64, f64)], x: f64, y: f64) -> bool {
    // Convex, counter-clockwise in raster orientation: all cross products agree.
    let mut sign = 0.0f64;
    for i in 0..poly.len() {
        let (ax, ay) = poly[i];
        let (bx, by) = poly[(i + 1) % poly.len()];
        let cross = (bx - ax) * (y - ay) - (by - ay) * (x - ax);
        if cross != 0.0 {
            if sign != 0.0 && cross.signum() != sign {
                return false;
            }
            sign = cross.signum();
        }
    }
    true
}

fn shape_bbox(params: &SceneParams) -> (f64, f64, f64, f64) {
    let (cx, cy) = params.center;
    match shape_vertices(params.class.shape, params.center, params.scale, params.angle) {
        None => (cx - params.scale, cy - params.scale, cx + params.scale, cy + params.scale),
        Some(v) => v.iter().fold(
            (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
            |(x0, y0, x1, y1), &(x, y)| (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
        ),
    }
}

const SUPERSAMPLE: usize = 4;
const BACKGROUND: f32 = 0.5;
const NOISE_AMPLITUDE: f32 = 0.04;

/// Renders a scene deterministically from `seed`: uniform noise around
/// mid-gray, `clutter` gray disks, then the colored shape (4x4 supersampled).
pub fn generate_scene(seed: u64, params: &SceneParams) -> Result<SyntheticScene> {
    if !(MIN_SCENE_SCALE..=MAX_SCENE_SCALE).contains(&params.scale) {
        return Err(Error::InvalidParameter(format!(
            "scene scale {} outside [{MIN_SCENE_SCALE}, {MAX_SCENE_SCALE}]",
            params.scale
        )));
    }
    if params.size < 8 {
        return Err(Error::InvalidParameter(format!("scene size {}", params.size)));
    }
    let (x0, y0, x1, y1) = shape_bbox(params);
    if !(x0 >= -1.0 && y0 >= -1.0 && x1 <= 1.0 && y1 <= 1.0) {
        return Err(Error::OutOfFrame);
    }
    let bbox = BoundingBox::new(x0, y0, x1, y1)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = params.size;
    let mut image = ImageBuffer::from_fn(n, n, 3, |_, _, _| {
        BACKGROUND + rng.random_range(-NOISE_AMPLITUDE..=NOISE_AMPLITUDE)
    });

    for _ in 0..params.clutter {
        let cx = rng.random_range(-0.95..0.95);
        let cy = rng.random_range(-0.95..0.95);
        let radius: f64 = rng.random_range(0.04..0.12);
        let level: f32 = rng.random_range(0.3..0.7);
        paint(&mut image, (cx - radius, cy - radius, cx + radius, cy + radius), [level; 3], |x, y| {
            (x - cx) * (x - cx) + (y - cy) * (y - cy) <= radius * radius
        });
    }

    let rgb = params.class.color.rgb();
    let (cx, cy) = params.center;
    let r2 = params.scale * params.scale;
    match shape_vertices(params.class.shape, params.center, params.scale, params.angle) {
        None => paint(&mut image, (x0, y0, x1, y1), rgb, |x, y| {
            (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r2
        }),
        Some(poly) => paint(&mut image, (x0, y0, x1, y1), rgb, |x, y| inside_polygon(&poly, x, y)),
    }

    Ok(SyntheticScene {
        image,
        class: params.class,
        center: params.center,
        scale: params.scale,
        angle: params.angle,
        bbox,
    })
}

/// Blends `rgb` into every pixel of the normalized `region` by the fraction
/// of its subsamples inside the shape.
fn paint(
    image: &mut ImageBuffer,
    (x0, y0, x1, y1): (f64, f64, f64, f64),
    rgb: [f32; 3],
    inside: impl Fn(f64, f64) -> bool,
) {
    let n = image.width();
    let to_px = |v: f64| ((v + 1.0) * n as f64 * 0.5).clamp(0.0, n as f64);
    let (c0, c1) = (libm::floor(to_px(x0)) as usize, (libm::ceil(to_px(x1)) as usize).min(n));
    let (r0, r1) = (libm::floor(to_px(y0)) as usize, (libm::ceil(to_px(y1)) as usize).min(n));
    let step = 2.0 / (n * SUPERSAMPLE) as f64;
    for r in r0..r1 {
        for c in c0..c1 {
            let mut hits = 0usize;
            for sy in 0..SUPERSAMPLE {
                for sx in 0..SUPERSAMPLE {
                    let x = -1.0 + ((c * SUPERSAMPLE + sx) as f64 + 0.5) * step;
                    let y = -1.0 + ((r * SUPERSAMPLE + sy) as f64 + 0.5) * step;
                    hits += usize::from(inside(x, y));
                }
            }
            if hits == 0 {
                continue;
            }
            let a = hits as f32 / (SUPERSAMPLE * SUPERSAMPLE) as f32;
            for (ch, &v) in rgb.iter().enumerate() {
                let old = image.get(r, c, ch);
                image.set(r, c, ch, old * (1.0 - a) + v * a);
            }
        }
    }
}

/// Squares are drawn with circumradius `scale`, so their half side is `scale / sqrt 2`.
pub fn square_half_side(scale: f64) -> f64 {
    scale * FRAC_1_SQRT_2
}

/// Placement distribution for a suite of upright scenes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteLayout {
    /// Range of the object's distance from the image center.
    pub eccentricity: (f64, f64),
    /// Azimuth window `(center, half_width)` in degrees, measured from `+x`
    /// toward `+y`; `None` draws the azimuth uniformly.
    pub azimuth: Option<(f64, f64)>,
    pub scale: (f64, f64),
    pub clutter: usize,
    pub size: usize,
}

impl SuiteLayout {
    /// Objects at the center, sizes spread over most of the scale range.
    pub const CENTERED: SuiteLayout = SuiteLayout {
        eccentricity: (0.0, 0.05),
        azimuth: None,
        scale: (0.2, 0.5),
        clutter: 2,
        size: DEFAULT_SCENE_SIZE,
    };

    /// Objects at eccentricity 0.45 within 60 degrees of straight up.
    pub const UPPER_ARC: SuiteLayout = SuiteLayout {
        eccentricity: (0.45, 0.45),
        azimuth: Some((-90.0, 60.0)),
        scale: (0.3, 0.3),
        clutter: 2,
        size: DEFAULT_SCENE_SIZE,
    };

    /// Objects anywhere between 0.2 and 0.5 from the center.
    pub const SCATTERED: SuiteLayout = SuiteLayout {
        eccentricity: (0.2, 0.5),
        azimuth: None,
        scale: (0.25, 0.4),
        clutter: 2,
        size: DEFAULT_SCENE_SIZE,
    };

    fn validate(&self) -> Result<()> {
        let (e0, e1) = self.eccentricity;
        let (s0, s1) = self.scale;
        let ordered = |a: f64, b: f64| a.is_finite() && b.is_finite() && a <= b;
        if !(ordered(e0, e1) && e0 >= 0.0) {
            return Err(Error::InvalidParameter(format!("eccentricity range [{e0}, {e1}]")));
        }
        if !(ordered(s0, s1) && s0 >= MIN_SCENE_SCALE && s1 <= MAX_SCENE_SCALE) {
            return Err(Error::InvalidParameter(format!("scale range [{s0}, {s1}]")));
        }
        if let Some((c, hw)) = self.azimuth {
            if !(c.is_finite() && hw.is_finite() && hw >= 0.0) {
                return Err(Error::InvalidParameter(format!("azimuth window ({c}, {hw})")));
            }
        }
        Ok(())
    }
}

const PLACEMENT_ATTEMPTS: usize = 1000;

/// `count` scenes with labels cycling through the nine classes. Placements
/// that leave the frame are redrawn.
pub fn generate_suite(seed: u64, count: usize, layout: &SuiteLayout) -> Result<Vec<SyntheticScene>> {
    layout.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scenes = Vec::with_capacity(count);
    for index in 0..count {
        let class = SceneClass::from_index(index % SCENE_CLASS_COUNT).expect("index below class count");
        let mut attempts = 0;
        let scene = loop {
            let r = rng.random_range(layout.eccentricity.0..=layout.eccentricity.1);
            let phi = match layout.azimuth {
                Some((c, hw)) => (c + rng.random_range(-hw..=hw)).to_radians(),
                None => rng.random_range(0.0..TAU),
            };
            let scale = rng.random_range(layout.scale.0..=layout.scale.1);
            let (s, c) = libm::sincos(phi);
            let params = SceneParams {
                class,
                center: (r * c, r * s),
                scale,
                angle: 0.0,
                clutter: layout.clutter,
                size: layout.size,
            };
            match generate_scene(rng.random(), &params) {
                Err(Error::OutOfFrame) if attempts < PLACEMENT_ATTEMPTS => attempts += 1,
                other => break other?,
            }
        };
        scenes.push(scene);
    }
    Ok(scenes)
}

impl core::fmt::Display for SceneClass {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(&self.name())
    }
}

impl core::str::FromStr for SceneClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SceneClass::all()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown scene class {:?}", s.to_string())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn params(class: usize, center: (f64, f64), scale: f64) -> SceneParams {
        SceneParams {
            class: SceneClass::from_index(class).unwrap(),
            center,
            scale,
            angle: 0.3,
            clutter: 3,
            size: 128,
        }
    }

    #[test]
    fn bbox_mask_examples() {
        let full = bbox_mask(&[BoundingBox::FULL], 11).unwrap();
        assert_eq!(full.count(), 121);
        let tiny = BoundingBox::new(-0.05, -0.05, 0.05, 0.05).unwrap();
        let m = bbox_mask(&[tiny], 11).unwrap();
        assert_eq!(m.count(), 1);
        assert!(m.get(5, 5));
        assert_eq!(bbox_mask(&[], 11).unwrap().count(), 0);
    }

    #[test]
    fn keypoint_mask_examples() {
        let m = keypoint_mask(&[(0.0, 0.0)], 11, DEFAULT_SIGMA_COEFF, 0.2).unwrap();
        assert!(m.get(5, 5));
        let wide = keypoint_mask(&[(0.0, 0.0)], 11, 2.0, 0.2).unwrap();
        assert!(wide.count() > m.count());
        let pts = [(0.1, 0.3), (-0.4, 0.2)];
        let twice = [(0.1, 0.3), (0.1, 0.3), (-0.4, 0.2)];
        assert_eq!(keypoint_mask(&pts, 11, 0.15, 0.2), keypoint_mask(&twice, 11, 0.15, 0.2));
        assert_eq!(keypoint_mask(&[], 11, 0.15, 0.2), Err(Error::EmptyInput));
    }

    #[test]
    fn far_keypoints_do_not_underflow() {
        let m = keypoint_mask(&[(0.1, 0.1)], 3, 1e-4, 0.2).unwrap();
        assert_eq!(m.count(), 1);
        assert!(m.get(1, 1));
    }

    #[test]
    fn class_indices_and_names() {
        for (i, c) in SceneClass::all().enumerate() {
            assert_eq!(c.index(), i);
            assert_eq!(c.name().parse::<SceneClass>().unwrap(), c);
        }
        assert_eq!(scene_labels().labels()[0], "red-disk");
        assert_eq!(scene_labels().labels()[8], "blue-triangle");
        assert!(SceneClass::from_index(9).is_none());
    }

    #[test]
    fn same_seed_same_scene() {
        let p = params(4, (0.2, -0.1), 0.25);
        assert_eq!(generate_scene(7, &p).unwrap(), generate_scene(7, &p).unwrap());
        assert_ne!(generate_scene(7, &p).unwrap().image, generate_scene(8, &p).unwrap().image);
    }

    #[test]
    fn red_disk_area() {
        let mut p = params(0, (0.0, 0.0), 0.3);
        p.clutter = 0;
        p.size = 224;
        let scene = generate_scene(1, &p).unwrap();
        let red = (0..224 * 224)
            .filter(|i| {
                let px = scene.image.pixel(i / 224, i % 224);
                px[0] > 0.7 && px[1] < 0.35
            })
            .count() as f64;
        let frac = red / (224.0 * 224.0);
        let want = PI * 0.09 / 4.0;
        assert!((frac - want).abs() < 0.1 * want, "{frac} vs {want}");
    }

    #[test]
    fn box_is_tight() {
        for class in 0..9 {
            let p = params(class, (-0.3, 0.4), 0.2);
            let s = generate_scene(3, &p).unwrap();
            let b = s.bbox;
            assert!((b.x_max() - b.x_min()) * (b.y_max() - b.y_min()) <= 0.16 + 1e-9);
            let img = &s.image;
            for r in 0..img.height() {
                for c in 0..img.width() {
                    let px = img.pixel(r, c);
                    let max = px.iter().copied().fold(0.0f32, f32::max);
                    let min = px.iter().copied().fold(1.0f32, f32::min);
                    if max - min > 0.3 {
                        let (x, y) = img.pixel_center(r, c);
                        let slack = 1.0 / img.width() as f64;
                        assert!(
                            x >= b.x_min() - slack && x <= b.x_max() + slack
                                && y >= b.y_min() - slack && y <= b.y_max() + slack,
                            "class {class}: colored pixel ({r}, {c}) outside box"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn scene_errors() {
        assert_eq!(generate_scene(0, &params(0, (0.9, 0.0), 0.2)), Err(Error::OutOfFrame));
        assert!(generate_scene(0, &params(0, (0.0, 0.0), 0.6)).is_err());
        assert!(generate_scene(0, &params(0, (0.0, 0.0), 0.01)).is_err());
    }

    #[test]
    fn annotation_record_holds_geometry() {
        let rec = AnnotationRecord {
            image_path: "a.png".into(),
            label: "red-disk".into(),
            boxes: vec![BoundingBox::FULL],
            keypoints: vec![(0.0, 0.0)],
        };
        assert_eq!(bbox_mask(&rec.boxes, 3).unwrap().count(), 9);
    }

    #[test]
    fn suite_cycles_labels_and_honors_layout() {
        let layout = SuiteLayout { size: 64, ..SuiteLayout::UPPER_ARC };
        let suite = generate_suite(9, 20, &layout).unwrap();
        assert_eq!(suite.len(), 20);
        for (i, s) in suite.iter().enumerate() {
            assert_eq!(s.label(), i % 9);
            let (x, y) = s.center;
            assert!((libm::hypot(x, y) - 0.45).abs() < 1e-12);
            let deg = libm::atan2(y, x).to_degrees();
            assert!((-150.0..=-30.0).contains(&deg), "{deg}");
        }
        assert_eq!(suite, generate_suite(9, 20, &layout).unwrap());
        assert!(generate_suite(9, 0, &layout).unwrap().is_empty());
        let bad = SuiteLayout { scale: (0.3, 0.9), ..layout };
        assert!(generate_suite(9, 1, &bad).is_err());
    }
}
