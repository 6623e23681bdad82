//! Heat map files: `{"n", "label_subset", "values", "valid"}` with row-major
//! values; a missing `valid` array means every cell is valid.

use std::fs;
use std::path::Path;

use foveate_core::localize::{GridMap, LikelihoodMap};
use foveate_core::ImageBuffer;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapFile {
    pub n: usize,
    /// Label indices into the oracle's label set.
    #[serde(default)]
    pub label_subset: Vec<usize>,
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valid: Option<Vec<bool>>,
}

#[derive(Debug, thiserror::Error)]
pub enum HeatmapError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error("{0}")]
    Core(#[from] foveate_core::Error),
}

impl HeatmapFile {
    pub fn from_likelihood(map: &LikelihoodMap) -> Self {
        Self { n: map.n(), label_subset: map.label_subset().to_vec(), values: map.values().to_vec(), valid: None }
    }

    /// Invalid cells are written as 0 with `valid = false`.
    pub fn from_grid(map: &GridMap, label_subset: Vec<usize>) -> Self {
        let all_valid = map.valid().iter().all(|&v| v);
        let values = map.values().iter().zip(map.valid()).map(|(&v, &ok)| if ok { v } else { 0.0 }).collect();
        Self { n: map.n(), label_subset, values, valid: (!all_valid).then(|| map.valid().to_vec()) }
    }

    pub fn to_grid(&self) -> foveate_core::Result<GridMap> {
        let valid = self.valid.clone().unwrap_or_else(|| vec![true; self.values.len()]);
        GridMap::new(self.n, self.values.clone(), valid)
    }

    pub fn read(path: &Path) -> Result<Self, HeatmapError> {
        let text = fs::read_to_string(path).map_err(|source| HeatmapError::Io { path: path.display().to_string(), source })?;
        let file: Self = serde_json::from_str(&text)
            .map_err(|source| HeatmapError::Json { path: path.display().to_string(), source })?;
        file.to_grid()?;
        Ok(file)
    }

    pub fn write(&self, path: &Path) -> Result<(), HeatmapError> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|source| HeatmapError::Json { path: path.display().to_string(), source })?;
        fs::write(path, text + "\n").map_err(|source| HeatmapError::Io { path: path.display().to_string(), source })
    }
}

/// Grayscale rendering, one block of `cell` pixels per grid cell; values
/// are clamped to `[0, 1]` and invalid cells drawn black.
pub fn render(map: &GridMap, cell: usize) -> ImageBuffer {
    let n = map.n();
    let small = ImageBuffer::from_fn(n, n, 1, |r, c, _| map.get(r, c).map_or(0.0, |v| v.clamp(0.0, 1.0) as f32));
    let side = n * cell.max(1);
    let mut out = ImageBuffer::filled(side, side, 1, 0.0);
    for r in 0..side {
        for c in 0..side {
            out.set(r, c, 0, small.get(r / cell.max(1), c / cell.max(1), 0));
        }
    }
    out
}
