//! Fixtures and brute-force reference implementations shared by the
//! integration tests.
#![allow(dead_code)]

use foveate_core::localize::{fixation_grid, GroundTruthMask, LikelihoodMap};
use foveate_core::oracle::{Classifier, LabelSet, ProbVector};
use foveate_core::{ImageBuffer, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn noise_image(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> ImageBuffer {
    ImageBuffer::from_fn(h, w, c, |_, _, _| rng.random::<f32>())
}

fn blur_axis(data: &[f32], side: usize, c: usize, kernel: &[f64], horizontal: bool) -> Vec<f32> {
    let half = (kernel.len() / 2) as isize;
    let last = side as isize - 1;
    let mut out = vec![0.0f32; data.len()];
    for a in 0..side {
        for b in 0..side {
            for ch in 0..c {
                let mut acc = 0.0f64;
                for (k, &w) in kernel.iter().enumerate() {
                    // Mirror at the borders.
                    let mut t = b as isize + k as isize - half;
                    if t < 0 {
                        t = -t;
                    }
                    if t > last {
                        t = 2 * last - t;
                    }
                    let (r, col) = if horizontal { (a, t as usize) } else { (t as usize, a) };
                    acc += w * data[(r * side + col) * c + ch] as f64;
                }
                let (r, col) = if horizontal { (a, b) } else { (b, a) };
                out[(r * side + col) * c + ch] = acc as f32;
            }
        }
    }
    out
}

/// Uniform RGB noise smoothed by a Gaussian of `sigma` pixels and stretched
/// to `[0, 1]`.
pub fn blurred_image(seed: u64, side: usize, sigma: f64) -> ImageBuffer {
    let mut r = rng(seed);
    let half = (3.0 * sigma).ceil() as isize;
    let raw: Vec<f64> = (-half..=half).map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = raw.iter().sum();
    let kernel: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let mut data = noise_image(&mut r, side, side, 3).into_data();
    data = blur_axis(&data, side, 3, &kernel, true);
    data = blur_axis(&data, side, 3, &kernel, false);
    let (lo, hi) = data.iter().fold((f32::MAX, f32::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    let span = (hi - lo).max(1e-6);
    ImageBuffer::new(side, side, 3, data.iter().map(|&v| ((v - lo) / span).clamp(0.0, 1.0)).collect()).unwrap()
}

/// Textbook bilinear interpolation on pixel centers; neighbors outside the
/// raster read `fill`.
pub fn bilinear_oracle(img: &ImageBuffer, x: f64, y: f64, fill: f32) -> Vec<f64> {
    let (h, w) = img.dims();
    let px = (x + 1.0) * w as f64 / 2.0 - 0.5;
    let py = (y + 1.0) * h as f64 / 2.0 - 0.5;
    let x0 = px.floor();
    let y0 = py.floor();
    let tx = px - x0;
    let ty = py - y0;
    let read = |r: f64, c: f64, ch: usize| -> f64 {
        if r < 0.0 || c < 0.0 || r >= h as f64 || c >= w as f64 {
            fill as f64
        } else {
            img.get(r as usize, c as usize, ch) as f64
        }
    };
    (0..img.channels())
        .map(|ch| {
            read(y0, x0, ch) * (1.0 - tx) * (1.0 - ty)
                + read(y0, x0 + 1.0, ch) * tx * (1.0 - ty)
                + read(y0 + 1.0, x0, ch) * (1.0 - tx) * ty
                + read(y0 + 1.0, x0 + 1.0, ch) * tx * ty
        })
        .collect()
}

pub fn peak_cell(values: &[f64], n: usize) -> (usize, usize) {
    let mut best = 0;
    for k in 0..values.len() {
        if values[k] > values[best] {
            best = k;
        }
    }
    (best / n, best % n)
}

pub fn random_map(rng: &mut ChaCha8Rng, n: usize) -> LikelihoodMap {
    // Coarse levels half of the time so ties are common.
    let coarse = rng.random_bool(0.5);
    let values = (0..n * n)
        .map(|_| if coarse { rng.random_range(0..5) as f64 / 4.0 } else { rng.random::<f64>() })
        .collect();
    LikelihoodMap::new(n, values, vec![0]).unwrap()
}

pub fn random_mask(rng: &mut ChaCha8Rng, n: usize) -> GroundTruthMask {
    let density = rng.random_range(0.05..0.6);
    GroundTruthMask::new(n, (0..n * n).map(|_| rng.random_bool(density)).collect()).unwrap()
}

pub fn lattice_xy(n: usize) -> Vec<(f64, f64)> {
    fixation_grid(n).unwrap().iter().map(|p| (p.x(), p.y())).collect()
}

/// Classifier whose output is a fixed function of its input pixels.
pub struct HashOracle {
    pub labels: LabelSet,
    pub seed: u64,
    pub size: (usize, usize),
    pub sharpness: f64,
}

impl HashOracle {
    pub fn new(k: usize, seed: u64, size: (usize, usize)) -> Self {
        let labels = LabelSet::new((0..k).map(|i| format!("c{i}")).collect()).unwrap();
        Self { labels, seed, size, sharpness: 3.0 }
    }

    fn digest(&self, img: &ImageBuffer) -> u64 {
        let mut h = self.seed ^ 0xcbf2_9ce4_8422_2325;
        for v in img.data().iter().step_by(7) {
            h ^= v.to_bits() as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }
}

impl Classifier for HashOracle {
    fn labels(&self) -> &LabelSet {
        &self.labels
    }

    fn input_size(&self) -> (usize, usize) {
        self.size
    }

    fn classify(&self, batch: &[ImageBuffer]) -> Result<Vec<ProbVector>> {
        batch
            .iter()
            .map(|img| {
                let mut r = rng(self.digest(img));
                let logits: Vec<f64> = (0..self.labels.len()).map(|_| r.random::<f64>() * self.sharpness).collect();
                foveate_core::oracle::softmax(&logits, 1.0)
            })
            .collect()
    }
}
