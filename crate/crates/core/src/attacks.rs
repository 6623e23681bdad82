//! Worst-case geometric attacks and accuracy-versus-parameter sweeps.
//!
//! For each image the attack evaluates every parameter in a sweep, keeps the
//! parameter with the largest cross-entropy (first one on ties) and scores
//! the prediction made there.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::imgops::{circular_mask, resize, roll_translate, rotate_about_fixation, zoom_about_fixation};
use crate::oracle::{cross_entropy, Classifier};
use crate::retina::{to_logpolar, DEFAULT_FILL};
use crate::{Error, FixationPoint, ImageBuffer, LogPolarGrid, Result};

/// Images per oracle call.
const BATCH: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Frame {
    /// Resize and keep the disk inscribed in the frame.
    Cartesian,
    /// Resize and resample onto a log-polar grid.
    Retinotopic,
}

/// Oracle-independent part of an input pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTransform {
    pub frame: Frame,
    pub grid: Option<LogPolarGrid>,
    pub mask_radius: f64,
    pub fill: f32,
}

impl FrameTransform {
    pub fn cartesian() -> Self {
        Self { frame: Frame::Cartesian, grid: None, mask_radius: 1.0, fill: DEFAULT_FILL }
    }

    pub fn retinotopic(grid: LogPolarGrid) -> Self {
        Self { frame: Frame::Retinotopic, grid: Some(grid), mask_radius: 1.0, fill: DEFAULT_FILL }
    }

    /// Turns a raw image into a classifier input of size `input_size`.
    pub fn apply(&self, image: &ImageBuffer, input_size: (usize, usize)) -> Result<ImageBuffer> {
        match self.frame {
            Frame::Cartesian => {
                let resized = resize(image, input_size.0, input_size.1)?;
                circular_mask(&resized, FixationPoint::CENTER, self.mask_radius, self.fill)
            }
            Frame::Retinotopic => {
                let grid = self.grid.as_ref().ok_or(Error::MissingGrid)?;
                let resized = resize(image, input_size.0, input_size.1)?;
                Ok(to_logpolar(&resized, grid, self.fill))
            }
        }
    }
}

/// A frame transform bound to the oracle that consumes its output.
#[derive(Clone, Copy)]
pub struct PipelineSpec<'a> {
    pub transform: &'a FrameTransform,
    pub oracle: &'a dyn Classifier,
}

impl<'a> PipelineSpec<'a> {
    pub fn new(transform: &'a FrameTransform, oracle: &'a dyn Classifier) -> Self {
        Self { transform, oracle }
    }

    pub fn input_size(&self) -> (usize, usize) {
        self.oracle.input_size()
    }
}

pub fn prepare_input(image: &ImageBuffer, spec: &PipelineSpec<'_>) -> Result<ImageBuffer> {
    spec.transform.apply(image, spec.input_size())
}

/// One point of an attack sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AttackParam {
    /// Rotation about the image center, in degrees.
    Rotation(f64),
    /// Zoom about the image center; below one shrinks the content.
    Zoom(f64),
    /// Roll that brings fixation-grid point `(row, col)` to the center of the
    /// classifier-sized input.
    Translation { row: usize, col: usize, dx: isize, dy: isize },
}

impl AttackParam {
    /// Scalar used in curves: degrees, zoom factor, or the row-major grid index.
    pub fn value(&self, grid_n: usize) -> f64 {
        match *self {
            AttackParam::Rotation(d) => d,
            AttackParam::Zoom(z) => z,
            AttackParam::Translation { row, col, .. } => (row * grid_n + col) as f64,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            AttackParam::Rotation(d) => format!("{d}"),
            AttackParam::Zoom(z) => format!("{z}"),
            AttackParam::Translation { row, col, .. } => format!("{row}:{col}"),
        }
    }

    /// Applies the perturbation to a raw image. Rolls act on the image
    /// already resized to `input_size`.
    pub fn apply(
        &self,
        image: &ImageBuffer,
        input_size: (usize, usize),
        fill: f32,
    ) -> Result<ImageBuffer> {
        match *self {
            AttackParam::Rotation(deg) => {
                Ok(rotate_about_fixation(image, FixationPoint::CENTER, deg.to_radians(), fill))
            }
            AttackParam::Zoom(z) => zoom_about_fixation(image, FixationPoint::CENTER, z, fill),
            AttackParam::Translation { dx, dy, .. } => {
                let resized = resize(image, input_size.0, input_size.1)?;
                Ok(roll_translate(&resized, dx, dy))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackKind {
    Rotation,
    Zoom,
    Translation,
}

/// -180 to 180 degrees in 15 degree steps.
pub fn rotation_sweep() -> Vec<AttackParam> {
    (-12..=12).map(|k| AttackParam::Rotation(15.0 * k as f64)).collect()
}

/// Zoom-out attack range: 1.0 down to 0.1 in steps of 0.1.
pub fn zoom_attack_sweep() -> Vec<AttackParam> {
    (1..=10).rev().map(|k| AttackParam::Zoom(k as f64 / 10.0)).collect()
}

/// Full zoom curve: x10 down to x0.1.
pub fn zoom_curve_sweep() -> Vec<AttackParam> {
    let zoom_in = (2..=10).rev().map(|k| AttackParam::Zoom(k as f64));
    zoom_in.chain(zoom_attack_sweep()).collect()
}

/// Rolls placing each point of an `n x n` fixation lattice at the center of
/// an `input_size` raster, row-major.
pub fn translation_sweep(n: usize, input_size: (usize, usize)) -> Result<Vec<AttackParam>> {
    let lattice = crate::localize::fixation_grid(n)?;
    let (h, w) = input_size;
    Ok(lattice
        .iter()
        .enumerate()
        .map(|(idx, fix)| AttackParam::Translation {
            row: idx / n,
            col: idx % n,
            dx: libm::round(-fix.x() * w as f64 * 0.5) as isize,
            dy: libm::round(-fix.y() * h as f64 * 0.5) as isize,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackOutcome {
    pub worst_param: AttackParam,
    pub predicted: usize,
    pub correct: bool,
    pub per_param_loss: Vec<(AttackParam, f64)>,
    pub per_param_correct: Vec<(AttackParam, bool)>,
}

/// Evaluates every parameter on one image and keeps the worst one.
pub fn run_attack(
    image: &ImageBuffer,
    label: usize,
    spec: &PipelineSpec<'_>,
    params: &[AttackParam],
) -> Result<AttackOutcome> {
    if params.is_empty() {
        return Err(Error::EmptyInput);
    }
    let k = spec.oracle.labels().len();
    if label >= k {
        return Err(Error::IndexOutOfRange { index: label, len: k });
    }
    let input_size = spec.input_size();
    let fill = spec.transform.fill;
    let mut per_param_loss = Vec::with_capacity(params.len());
    let mut per_param_correct = Vec::with_capacity(params.len());
    let mut worst: Option<(usize, f64, usize)> = None;
    for (chunk_idx, chunk) in params.chunks(BATCH).enumerate() {
        let inputs = chunk
            .iter()
            .map(|p| p.apply(image, input_size, fill).and_then(|img| prepare_input(&img, spec)))
            .collect::<Result<Vec<_>>>()?;
        let probs = spec.oracle.classify(&inputs)?;
        if probs.len() != chunk.len() {
            return Err(Error::Oracle(format!(
                "{} probability vectors for {} inputs",
                probs.len(),
                chunk.len()
            )));
        }
        for (offset, (param, p)) in chunk.iter().zip(&probs).enumerate() {
            let loss = cross_entropy(p, label)?;
            let predicted = p.argmax();
            per_param_loss.push((*param, loss));
            per_param_correct.push((*param, predicted == label));
            if worst.map_or(true, |(_, l, _)| loss > l) {
                worst = Some((chunk_idx * BATCH + offset, loss, predicted));
            }
        }
    }
    let (idx, _, predicted) = worst.expect("non-empty sweep");
    Ok(AttackOutcome {
        worst_param: params[idx],
        predicted,
        correct: predicted == label,
        per_param_loss,
        per_param_correct,
    })
}

pub fn rotation_attack(
    image: &ImageBuffer,
    label: usize,
    spec: &PipelineSpec<'_>,
    angles_deg: &[f64],
) -> Result<AttackOutcome> {
    let params: Vec<_> = angles_deg.iter().map(|&a| AttackParam::Rotation(a)).collect();
    run_attack(image, label, spec, &params)
}

pub fn zoom_attack(
    image: &ImageBuffer,
    label: usize,
    spec: &PipelineSpec<'_>,
    factors: &[f64],
) -> Result<AttackOutcome> {
    let params: Vec<_> = factors.iter().map(|&z| AttackParam::Zoom(z)).collect();
    run_attack(image, label, spec, &params)
}

pub fn translation_attack(
    image: &ImageBuffer,
    label: usize,
    spec: &PipelineSpec<'_>,
    grid_n: usize,
) -> Result<AttackOutcome> {
    let params = translation_sweep(grid_n, spec.input_size())?;
    run_attack(image, label, spec, &params)
}

/// Fraction of images classified correctly at each parameter.
pub fn curve_from_outcomes(outcomes: &[AttackOutcome]) -> Vec<(AttackParam, f64)> {
    let Some(first) = outcomes.first() else { return Vec::new() };
    let n = outcomes.len() as f64;
    (0..first.per_param_correct.len())
        .map(|i| {
            let hits = outcomes.iter().filter(|o| o.per_param_correct[i].1).count();
            (first.per_param_correct[i].0, hits as f64 / n)
        })
        .collect()
}

/// Mean of the per-image worst-case correctness flags.
pub fn attack_accuracy_from_outcomes(outcomes: &[AttackOutcome]) -> f64 {
    if outcomes.is_empty() {
        return 0.0;
    }
    outcomes.iter().filter(|o| o.correct).count() as f64 / outcomes.len() as f64
}

pub fn run_dataset(
    dataset: &[(ImageBuffer, usize)],
    spec: &PipelineSpec<'_>,
    params: &[AttackParam],
) -> Result<Vec<AttackOutcome>> {
    if dataset.is_empty() {
        return Err(Error::EmptyInput);
    }
    dataset.iter().map(|(img, y)| run_attack(img, *y, spec, params)).collect()
}

pub fn accuracy_sweep(
    dataset: &[(ImageBuffer, usize)],
    spec: &PipelineSpec<'_>,
    params: &[AttackParam],
) -> Result<Vec<(AttackParam, f64)>> {
    Ok(curve_from_outcomes(&run_dataset(dataset, spec, params)?))
}

pub fn attack_accuracy(
    dataset: &[(ImageBuffer, usize)],
    spec: &PipelineSpec<'_>,
    params: &[AttackParam],
) -> Result<f64> {
    Ok(attack_accuracy_from_outcomes(&run_dataset(dataset, spec, params)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{LabelSet, ProbVector};
    use alloc::vec;

    struct Constant {
        labels: LabelSet,
        p: ProbVector,
    }

    impl Classifier for Constant {
        fn labels(&self) -> &LabelSet {
            &self.labels
        }
        fn input_size(&self) -> (usize, usize) {
            (16, 16)
        }
        fn classify(&self, batch: &[ImageBuffer]) -> Result<Vec<ProbVector>> {
            Ok(batch.iter().map(|_| self.p.clone()).collect())
        }
    }

    fn constant() -> Constant {
        Constant {
            labels: LabelSet::new(vec!["a".into(), "b".into(), "c".into()]).unwrap(),
            p: ProbVector::new(vec![0.5, 0.3, 0.2]).unwrap(),
        }
    }

    #[test]
    fn default_sweeps() {
        let r = rotation_sweep();
        assert_eq!(r.len(), 25);
        assert_eq!(r[0], AttackParam::Rotation(-180.0));
        assert_eq!(r[24], AttackParam::Rotation(180.0));
        let z: Vec<f64> = zoom_attack_sweep().iter().map(|p| p.value(0)).collect();
        assert_eq!(z, vec![1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1]);
        let curve = zoom_curve_sweep();
        assert_eq!(curve.len(), 19);
        assert_eq!(curve[0], AttackParam::Zoom(10.0));
        assert_eq!(curve[18], AttackParam::Zoom(0.1));
        let t = translation_sweep(11, (224, 224)).unwrap();
        assert_eq!(t.len(), 121);
        assert_eq!(t[60], AttackParam::Translation { row: 5, col: 5, dx: 0, dy: 0 });
        assert_eq!(t[0], AttackParam::Translation { row: 0, col: 0, dx: 112, dy: 112 });
    }

    #[test]
    fn constant_oracle_ties_pick_first() {
        let oracle = constant();
        let t = FrameTransform::cartesian();
        let spec = PipelineSpec::new(&t, &oracle);
        let img = ImageBuffer::filled(20, 20, 3, 0.4);
        let out = rotation_attack(&img, 1, &spec, &[-180.0, 0.0, 90.0]).unwrap();
        assert_eq!(out.worst_param, AttackParam::Rotation(-180.0));
        assert!(out.per_param_loss.windows(2).all(|w| w[0].1 == w[1].1));
        assert!(!out.correct);
        let out = zoom_attack(&img, 0, &spec, &[1.0, 0.5, 0.1]).unwrap();
        assert_eq!(out.worst_param, AttackParam::Zoom(1.0));
        assert!(out.correct);
        let out = translation_attack(&img, 0, &spec, 3).unwrap();
        assert!(matches!(out.worst_param, AttackParam::Translation { row: 0, col: 0, .. }));
        assert_eq!(out.per_param_loss.len(), 9);
    }

    #[test]
    fn prepare_requires_grid() {
        let oracle = constant();
        let t = FrameTransform { grid: None, ..FrameTransform::retinotopic(LogPolarGrid::standard(FixationPoint::CENTER)) };
        let spec = PipelineSpec::new(&t, &oracle);
        let img = ImageBuffer::filled(20, 20, 3, 0.4);
        assert_eq!(prepare_input(&img, &spec), Err(Error::MissingGrid));
    }

    #[test]
    fn prepare_constant_images() {
        let oracle = constant();
        let img = ImageBuffer::filled(20, 30, 3, 0.2);
        let cart = FrameTransform::cartesian();
        let out = prepare_input(&img, &PipelineSpec::new(&cart, &oracle)).unwrap();
        assert_eq!(out.dims(), (16, 16));
        assert_eq!(out.pixel(8, 8), &[0.2, 0.2, 0.2]);
        assert_eq!(out.pixel(0, 0), &[0.5, 0.5, 0.5]);
        let grid = crate::retina::build_grid(16, 16, -5.0, 0.0, FixationPoint::CENTER).unwrap();
        let ret = FrameTransform::retinotopic(grid);
        let gray = ImageBuffer::filled(20, 30, 3, 0.5);
        let out = prepare_input(&gray, &PipelineSpec::new(&ret, &oracle)).unwrap();
        assert!(out.data().iter().all(|&v| (v - 0.5).abs() < 1e-6));
    }

    #[test]
    fn empty_inputs() {
        let oracle = constant();
        let t = FrameTransform::cartesian();
        let spec = PipelineSpec::new(&t, &oracle);
        let img = ImageBuffer::filled(20, 20, 3, 0.4);
        assert_eq!(run_attack(&img, 0, &spec, &[]), Err(Error::EmptyInput));
        assert_eq!(accuracy_sweep(&[], &spec, &rotation_sweep()), Err(Error::EmptyInput));
        assert!(run_attack(&img, 7, &spec, &rotation_sweep()).is_err());
    }

    #[test]
    fn identity_sweep_is_plain_accuracy() {
        let oracle = constant();
        let t = FrameTransform::cartesian();
        let spec = PipelineSpec::new(&t, &oracle);
        let data = vec![(ImageBuffer::filled(8, 8, 3, 0.1), 0), (ImageBuffer::filled(8, 8, 3, 0.9), 1)];
        let curve = accuracy_sweep(&data, &spec, &[AttackParam::Rotation(0.0)]).unwrap();
        assert_eq!(curve, vec![(AttackParam::Rotation(0.0), 0.5)]);
        assert_eq!(attack_accuracy(&data, &spec, &[AttackParam::Zoom(1.0)]).unwrap(), 0.5);
    }
}
