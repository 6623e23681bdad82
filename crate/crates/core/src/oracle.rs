//! Classifier oracles: probability vectors over a label set, the
//! [`Classifier`] abstraction, and a deterministic nearest-prototype toy
//! classifier used for self-contained evaluation.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, ImageBuffer, Result};

pub const DEFAULT_INPUT_SIZE: (usize, usize) = (224, 224);
pub const DEFAULT_TOY_TEMPERATURE: f64 = 0.05;
/// Four regions times three channels.
pub const DESCRIPTOR_LEN: usize = 12;
const PROB_SUM_TOLERANCE: f64 = 1e-5;
const CROSS_ENTROPY_FLOOR: f64 = 1e-12;

pub type Descriptor = [f64; DESCRIPTOR_LEN];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    labels: Vec<String>,
}

impl LabelSet {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "label set needs at least 2 labels, got {}",
                labels.len()
            )));
        }
        let mut seen = BTreeSet::new();
        if let Some(dup) = labels.iter().find(|l| !seen.insert(l.as_str())) {
            return Err(Error::InvalidParameter(format!("duplicate label {dup:?}")));
        }
        Ok(Self { labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.labels.get(index).map(String::as_str)
    }
}

/// Probabilities over `K` labels summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector {
    values: Vec<f64>,
}

impl ProbVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "probability vector of length {}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidParameter(format!("probability {v} outside [0, 1]")));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
            return Err(Error::InvalidParameter(format!("probabilities sum to {sum}")));
        }
        Ok(Self { values })
    }

    pub fn uniform(k: usize) -> Self {
        assert!(k >= 2);
        Self { values: vec![1.0 / k as f64; k] }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Most likely label; the first one on ties.
    pub fn argmax(&self) -> usize {
        first_argmax(&self.values)
    }
}

pub(crate) fn first_argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Tempered softmax with max subtraction.
pub fn softmax(logits: &[f64], temperature: f64) -> Result<ProbVector> {
    if logits.len() < 2 {
        return Err(Error::InvalidParameter(format!("{} logits", logits.len())));
    }
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::InvalidParameter(format!("temperature {temperature}")));
    }
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(Error::NonFiniteLogit);
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut values: Vec<f64> = logits.iter().map(|&l| libm::exp((l - max) / temperature)).collect();
    let total: f64 = values.iter().sum();
    for v in &mut values {
        *v /= total;
    }
    Ok(ProbVector { values })
}

/// `-ln p[label]`, with the probability floored at 1e-12.
pub fn cross_entropy(p: &ProbVector, label: usize) -> Result<f64> {
    let prob = *p
        .values
        .get(label)
        .ok_or(Error::IndexOutOfRange { index: label, len: p.len() })?;
    Ok(-libm::log(prob.max(CROSS_ENTROPY_FLOOR)))
}

/// Probability that the label lies in `subset`.
pub fn label_set_likelihood(p: &ProbVector, subset: &[usize]) -> Result<f64> {
    if subset.is_empty() {
        return Err(Error::EmptySubset);
    }
    let mut total = 0.0;
    for &k in subset {
        total += *p.values.get(k).ok_or(Error::IndexOutOfRange { index: k, len: p.len() })?;
    }
    Ok(total.clamp(0.0, 1.0))
}

/// Anything that maps images to probability vectors over a fixed label set.
pub trait Classifier: Send + Sync {
    fn labels(&self) -> &LabelSet;

    /// `(height, width)` every input must have.
    fn input_size(&self) -> (usize, usize) {
        DEFAULT_INPUT_SIZE
    }

    fn classify(&self, batch: &[ImageBuffer]) -> Result<Vec<ProbVector>>;
}

pub fn classify<C: Classifier + ?Sized>(
    oracle: &C,
    batch: &[ImageBuffer],
) -> Result<Vec<ProbVector>> {
    oracle.classify(batch)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DescriptorMode {
    /// Mean RGB of the four Cartesian quadrants; sensitive to rotation.
    CartesianQuadrant,
    /// Mean RGB of four bands of log-polar rows; azimuth is averaged out.
    RetinotopicRadial,
}

/// Twelve region means: TL, TR, BL, BR quadrants or four radial row bands,
/// three channels each. Gray inputs are replicated across channels.
pub fn toy_descriptor(image: &ImageBuffer, mode: DescriptorMode) -> Descriptor {
    let (h, w) = image.dims();
    let mut sums = [0.0f64; DESCRIPTOR_LEN];
    let mut counts = [0usize; 4];
    for r in 0..h {
        for c in 0..w {
            let region = match mode {
                DescriptorMode::CartesianQuadrant => {
                    usize::from(2 * r + 1 > h) * 2 + usize::from(2 * c + 1 > w)
                }
                DescriptorMode::RetinotopicRadial => (r * 4 / h).min(3),
            };
            counts[region] += 1;
            let px = image.pixel(r, c);
            for ch in 0..3 {
                sums[region * 3 + ch] += px[ch.min(px.len() - 1)] as f64;
            }
        }
    }
    for region in 0..4 {
        let n = counts[region].max(1) as f64;
        for ch in 0..3 {
            sums[region * 3 + ch] /= n;
        }
    }
    sums
}

/// Nearest-prototype classifier: logits are negative Euclidean distances
/// between an input's descriptor and each label's mean training descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyClassifier {
    mode: DescriptorMode,
    labels: LabelSet,
    prototypes: Vec<Descriptor>,
    temperature: f64,
    input_size: (usize, usize),
}

impl ToyClassifier {
    pub fn from_prototypes(
        mode: DescriptorMode,
        labels: LabelSet,
        prototypes: Vec<Descriptor>,
        temperature: f64,
        input_size: (usize, usize),
    ) -> Result<Self> {
        if prototypes.len() != labels.len() {
            return Err(Error::InvalidParameter(format!(
                "{} prototypes for {} labels",
                prototypes.len(),
                labels.len()
            )));
        }
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::InvalidParameter(format!("temperature {temperature}")));
        }
        Ok(Self { mode, labels, prototypes, temperature, input_size })
    }

    pub fn mode(&self) -> DescriptorMode {
        self.mode
    }

    pub fn prototypes(&self) -> &[Descriptor] {
        &self.prototypes
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn logits(&self, image: &ImageBuffer) -> Vec<f64> {
        let d = toy_descriptor(image, self.mode);
        self.prototypes
            .iter()
            .map(|p| {
                let sq: f64 = p.iter().zip(&d).map(|(a, b)| (a - b) * (a - b)).sum();
                -libm::sqrt(sq)
            })
            .collect()
    }
}

impl Classifier for ToyClassifier {
    fn labels(&self) -> &LabelSet {
        &self.labels
    }

    fn input_size(&self) -> (usize, usize) {
        self.input_size
    }

    fn classify(&self, batch: &[ImageBuffer]) -> Result<Vec<ProbVector>> {
        batch
            .iter()
            .map(|img| {
                if img.dims() != self.input_size {
                    return Err(Error::ShapeMismatch { expected: self.input_size, found: img.dims() });
                }
                softmax(&self.logits(img), self.temperature)
            })
            .collect()
    }
}

/// Fits per-label mean descriptors. `examples` pairs classifier-ready
/// images with label indices; every label needs at least one example.
pub fn toy_fit<'a>(
    examples: impl IntoIterator<Item = (&'a ImageBuffer, usize)>,
    labels: LabelSet,
    mode: DescriptorMode,
    temperature: f64,
) -> Result<ToyClassifier> {
    let k = labels.len();
    let mut sums = vec![[0.0f64; DESCRIPTOR_LEN]; k];
    let mut counts = vec![0usize; k];
    let mut input_size = None;
    for (img, label) in examples {
        if label >= k {
            return Err(Error::IndexOutOfRange { index: label, len: k });
        }
        match input_size {
            None => input_size = Some(img.dims()),
            Some(size) if size != img.dims() => {
                return Err(Error::ShapeMismatch { expected: size, found: img.dims() })
            }
            _ => {}
        }
        let d = toy_descriptor(img, mode);
        for (s, v) in sums[label].iter_mut().zip(d) {
            *s += v;
        }
        counts[label] += 1;
    }
    if let Some(missing) = counts.iter().position(|&n| n == 0) {
        return Err(Error::MissingLabel(labels.labels()[missing].clone()));
    }
    for (s, &n) in sums.iter_mut().zip(&counts) {
        for v in s.iter_mut() {
            *v /= n as f64;
        }
    }
    ToyClassifier::from_prototypes(mode, labels, sums, temperature, input_size.unwrap_or(DEFAULT_INPUT_SIZE))
}
