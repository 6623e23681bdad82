//! Fixation-grid likelihood maps and the localization metrics computed on
//! them.
//!
//! Grid cell `(i, j)` of an `n x n` lattice sits at normalized
//! `(2j/(n-1) - 1, 2i/(n-1) - 1)`; for odd `n` the center cell is the image
//! center. Argmax ties resolve to the first cell in row-major order.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::attacks::{prepare_input, Frame, PipelineSpec};
use crate::imgops::fixation_sample;
use crate::oracle::{first_argmax, label_set_likelihood, ProbVector};
use crate::{Error, FixationPoint, ImageBuffer, Result};

pub const DEFAULT_GRID_N: usize = 11;
const RATIO_FLOOR: f64 = 1e-9;
pub const DEFAULT_LOG_ODDS_EPS: f64 = 1e-6;
const BATCH: usize = 32;

/// Uniform `n x n` lattice over `[-1, 1]^2`, row-major.
pub fn fixation_grid(n: usize) -> Result<Vec<FixationPoint>> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("fixation grid side {n} < 2")));
    }
    let coord = |k: usize| 2.0 * k as f64 / (n - 1) as f64 - 1.0;
    let mut points = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            points.push(FixationPoint::new(coord(j), coord(i))?);
        }
    }
    Ok(points)
}

fn require_odd(n: usize) -> Result<()> {
    if n < 3 || n % 2 == 0 {
        return Err(Error::InvalidParameter(format!("grid side {n} must be odd and >= 3")));
    }
    Ok(())
}

/// Label likelihood at each fixation point.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodMap {
    n: usize,
    values: Vec<f64>,
    label_subset: Vec<usize>,
}

impl LikelihoodMap {
    pub fn new(n: usize, values: Vec<f64>, label_subset: Vec<usize>) -> Result<Self> {
        if n < 2 || values.len() != n * n {
            return Err(Error::InvalidParameter(format!(
                "{} values for a {n}x{n} map",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidParameter(format!("likelihood {v} outside [0, 1]")));
        }
        Ok(Self { n, values, label_subset })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn label_subset(&self) -> &[usize] {
        &self.label_subset
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n + col]
    }

    pub fn fixations(&self) -> Vec<FixationPoint> {
        fixation_grid(self.n).expect("n >= 2 by construction")
    }

    /// `(row, col)` of the first maximum.
    pub fn argmax(&self) -> (usize, usize) {
        let idx = first_argmax(&self.values);
        (idx / self.n, idx % self.n)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruthMask {
    n: usize,
    cells: Vec<bool>,
}

impl GroundTruthMask {
    pub fn new(n: usize, cells: Vec<bool>) -> Result<Self> {
        if n < 2 || cells.len() != n * n {
            return Err(Error::InvalidParameter(format!(
                "{} cells for a {n}x{n} mask",
                cells.len()
            )));
        }
        Ok(Self { n, cells })
    }

    pub fn full(n: usize) -> Self {
        Self { n, cells: vec![true; n * n] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.cells[row * self.n + col]
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }
}

/// `n x n` reals with an explicit per-cell validity flag.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMap {
    n: usize,
    values: Vec<f64>,
    valid: Vec<bool>,
}

impl GridMap {
    pub fn new(n: usize, values: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
        if n < 2 || values.len() != n * n || valid.len() != n * n {
            return Err(Error::InvalidParameter(format!("grid map arrays do not match {n}x{n}")));
        }
        Ok(Self { n, values, valid })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    /// `None` for missing cells.
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let idx = row * self.n + col;
        self.valid[idx].then(|| self.values[idx])
    }
}

impl From<&LikelihoodMap> for GridMap {
    fn from(map: &LikelihoodMap) -> Self {
        GridMap { n: map.n, values: map.values.clone(), valid: vec![true; map.n * map.n] }
    }
}

/// Per-cell mean of peak-centered maps; cells with no contribution are missing.
#[derive(Debug, Clone, PartialEq)]
pub struct RecenteredMean {
    pub n: usize,
    pub mean_values: Vec<f64>,
    pub counts: Vec<usize>,
}

impl RecenteredMean {
    pub fn to_grid_map(&self) -> GridMap {
        GridMap {
            n: self.n,
            values: self.mean_values.clone(),
            valid: self.counts.iter().map(|&c| c > 0).collect(),
        }
    }
}

/// Classifies the fixation sample at every lattice point. Returns the raw
/// probability vectors in row-major order.
pub fn fixation_probabilities(
    image: &ImageBuffer,
    spec: &PipelineSpec<'_>,
    n: usize,
    min_ratio: f64,
) -> Result<Vec<ProbVector>> {
    let fixations = fixation_grid(n)?;
    let circular = spec.transform.frame == Frame::Cartesian;
    let fill = spec.transform.fill;
    let mut probs = Vec::with_capacity(fixations.len());
    for chunk in fixations.chunks(BATCH) {
        let inputs = chunk
            .iter()
            .map(|&fix| {
                fixation_sample(image, fix, min_ratio, circular, fill)
                    .and_then(|s| prepare_input(&s, spec))
            })
            .collect::<Result<Vec<_>>>()?;
        let out = spec.oracle.classify(&inputs)?;
        if out.len() != inputs.len() {
            return Err(Error::Oracle(format!(
                "{} probability vectors for {} inputs",
                out.len(),
                inputs.len()
            )));
        }
        probs.extend(out);
    }
    Ok(probs)
}

fn map_from_probs(n: usize, probs: &[ProbVector], label_subset: &[usize]) -> Result<LikelihoodMap> {
    let values = probs
        .iter()
        .map(|p| label_set_likelihood(p, label_subset))
        .collect::<Result<Vec<_>>>()?;
    LikelihoodMap::new(n, values, label_subset.to_vec())
}

pub fn likelihood_map(
    image: &ImageBuffer,
    label_subset: &[usize],
    spec: &PipelineSpec<'_>,
    n: usize,
    min_ratio: f64,
) -> Result<LikelihoodMap> {
    if label_subset.is_empty() {
        return Err(Error::EmptySubset);
    }
    let probs = fixation_probabilities(image, spec, n, min_ratio)?;
    map_from_probs(n, &probs, label_subset)
}

fn check_shapes(map_n: usize, mask_n: usize) -> Result<()> {
    if map_n != mask_n {
        return Err(Error::ShapeMismatch { expected: (map_n, map_n), found: (mask_n, mask_n) });
    }
    Ok(())
}

/// Whether the map's peak falls inside the mask.
pub fn pointing_game(map: &LikelihoodMap, mask: &GroundTruthMask) -> Result<bool> {
    check_shapes(map.n, mask.n)?;
    if mask.count() == 0 {
        return Err(Error::EmptyMask);
    }
    let (r, c) = map.argmax();
    Ok(mask.get(r, c))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InOut {
    pub mean_in: f64,
    pub mean_out: f64,
    /// `mean_in / max(mean_out, 1e-9)`.
    pub ratio: f64,
}

pub fn mean_in_out(map: &LikelihoodMap, mask: &GroundTruthMask) -> Result<InOut> {
    check_shapes(map.n, mask.n)?;
    let (mut sum_in, mut n_in, mut sum_out, mut n_out) = (0.0, 0usize, 0.0, 0usize);
    for (&v, &inside) in map.values.iter().zip(&mask.cells) {
        if inside {
            sum_in += v;
            n_in += 1;
        } else {
            sum_out += v;
            n_out += 1;
        }
    }
    if n_in == 0 || n_out == 0 {
        return Err(Error::DegenerateMask);
    }
    let mean_in = sum_in / n_in as f64;
    let mean_out = sum_out / n_out as f64;
    Ok(InOut { mean_in, mean_out, ratio: mean_in / mean_out.max(RATIO_FLOOR) })
}

/// 0.00, 0.01, ..., 1.00.
pub fn default_thresholds() -> Vec<f64> {
    (0..=100).map(|k| k as f64 / 100.0).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct IouCurve {
    pub curve: Vec<(f64, f64)>,
    pub peak_iou: f64,
    pub peak_threshold: f64,
}

/// IoU of `map >= t` against the mask for each threshold; an empty union scores 0.
pub fn iou_curve(map: &LikelihoodMap, mask: &GroundTruthMask, thresholds: &[f64]) -> Result<IouCurve> {
    check_shapes(map.n, mask.n)?;
    let mut curve = Vec::with_capacity(thresholds.len());
    let mut peak: Option<(f64, f64)> = None;
    for &t in thresholds {
        let (mut inter, mut union) = (0usize, 0usize);
        for (&v, &m) in map.values.iter().zip(&mask.cells) {
            let on = v >= t;
            inter += usize::from(on && m);
            union += usize::from(on || m);
        }
        let iou = if union == 0 { 0.0 } else { inter as f64 / union as f64 };
        curve.push((t, iou));
        if peak.map_or(true, |(best, _)| iou > best) {
            peak = Some((iou, t));
        }
    }
    let (peak_iou, peak_threshold) = peak.unwrap_or((0.0, 0.0));
    Ok(IouCurve { curve, peak_iou, peak_threshold })
}

/// Shifts every map (without wrapping) so its peak lands on the center cell
/// and averages the cells that stay inside the original extent.
pub fn recenter_mean(maps: &[LikelihoodMap]) -> Result<RecenteredMean> {
    let first = maps.first().ok_or(Error::EmptyInput)?;
    let n = first.n;
    require_odd(n)?;
    let center = (n / 2) as isize;
    let mut sums = vec![0.0; n * n];
    let mut counts = vec![0usize; n * n];
    for map in maps {
        check_shapes(n, map.n)?;
        let (pr, pc) = map.argmax();
        let (dr, dc) = (pr as isize - center, pc as isize - center);
        for i in 0..n {
            for j in 0..n {
                let (si, sj) = (i as isize + dr, j as isize + dc);
                if (0..n as isize).contains(&si) && (0..n as isize).contains(&sj) {
                    sums[i * n + j] += map.get(si as usize, sj as usize);
                    counts[i * n + j] += 1;
                }
            }
        }
    }
    let mean_values = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();
    Ok(RecenteredMean { n, mean_values, counts })
}

fn combine(a: &GridMap, b: &GridMap, f: impl Fn(f64, f64) -> f64) -> Result<GridMap> {
    check_shapes(a.n, b.n)?;
    let valid: Vec<bool> = a.valid.iter().zip(&b.valid).map(|(&x, &y)| x && y).collect();
    let values = a
        .values
        .iter()
        .zip(&b.values)
        .zip(&valid)
        .map(|((&x, &y), &ok)| if ok { f(x, y) } else { 0.0 })
        .collect();
    Ok(GridMap { n: a.n, values, valid })
}

/// Elementwise `a - b`; missing where either side is.
pub fn diff_map(a: &GridMap, b: &GridMap) -> Result<GridMap> {
    combine(a, b, |x, y| x - y)
}

/// Elementwise `logit(a) - logit(b)` after clamping to `[eps, 1 - eps]`.
pub fn log_odds_map(a: &GridMap, b: &GridMap, eps: f64) -> Result<GridMap> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::InvalidParameter(format!("log-odds clamp {eps} outside (0, 0.5)")));
    }
    let logit = |p: f64| {
        let p = p.clamp(eps, 1.0 - eps);
        libm::log(p / (1.0 - p))
    };
    combine(a, b, |x, y| logit(x) - logit(y))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaccadeOutcome {
    pub map: LikelihoodMap,
    /// Likelihood with the eye on the image center.
    pub pre_likelihood: f64,
    /// Likelihood after moving the eye to the map's peak.
    pub post_likelihood: f64,
    pub pre_correct: bool,
    pub post_correct: bool,
    pub target: (usize, usize),
}

/// Scores the central fixation, then the maximum-likelihood fixation.
pub fn saccade_and_classify(
    image: &ImageBuffer,
    label_subset: &[usize],
    spec: &PipelineSpec<'_>,
    n: usize,
    min_ratio: f64,
) -> Result<SaccadeOutcome> {
    require_odd(n)?;
    if label_subset.is_empty() {
        return Err(Error::EmptySubset);
    }
    let probs = fixation_probabilities(image, spec, n, min_ratio)?;
    let map = map_from_probs(n, &probs, label_subset)?;
    let center = (n / 2) * n + n / 2;
    let target = map.argmax();
    let peak = target.0 * n + target.1;
    Ok(SaccadeOutcome {
        pre_likelihood: map.values[center],
        post_likelihood: map.values[peak],
        pre_correct: label_subset.contains(&probs[center].argmax()),
        post_correct: label_subset.contains(&probs[peak].argmax()),
        target,
        map,
    })
}
