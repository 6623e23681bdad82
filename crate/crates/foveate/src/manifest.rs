//! JSON-lines dataset manifests.
//!
//! One record per line:
//! `{"image_path", "label", "coords": "pixel"|"normalized", "boxes": [[x_min, y_min, x_max, y_max]], "keypoints": [[x, y]]}`.
//! Pixel coordinates are continuous (pixel `i` spans `[i, i + 1]`) and are
//! converted with `2 x / W - 1`; the image header supplies `W` and `H`.
//! Relative image paths resolve against the manifest's directory.

use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use foveate_core::datasets::AnnotationRecord;
use foveate_core::imgops::BoundingBox;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{path}:{line}: {message}")]
    Invalid { path: PathBuf, line: usize, message: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coords {
    Pixel,
    #[default]
    Normalized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub image_path: String,
    pub label: String,
    #[serde(default)]
    pub coords: Coords,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub boxes: Vec<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub keypoints: Vec<[f64; 2]>,
}

/// Normalized boxes and keypoints; `image_path` is resolved.
pub fn load_manifest(path: &Path) -> Result<Vec<AnnotationRecord>, ManifestError> {
    let io_err = |source| ManifestError::Io { path: path.to_path_buf(), source };
    let file = fs::File::open(path).map_err(io_err)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut records = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| ManifestError::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        let invalid = |message: String| ManifestError::Invalid { path: path.to_path_buf(), line: line_no, message };
        records.push(convert(raw, &base).map_err(invalid)?);
    }
    Ok(records)
}

fn convert(raw: RawRecord, base: &Path) -> Result<AnnotationRecord, String> {
    let image_path = resolve(base, &raw.image_path);
    let annotated = !raw.boxes.is_empty() || !raw.keypoints.is_empty();
    let to_norm: Box<dyn Fn(f64, f64) -> (f64, f64)> = match raw.coords {
        Coords::Normalized => Box::new(|x, y| (x, y)),
        Coords::Pixel if annotated => {
            let (w, h) = image::image_dimensions(&image_path)
                .map_err(|e| format!("pixel coordinates need the image size of {}: {e}", image_path.display()))?;
            let (w, h) = (w as f64, h as f64);
            Box::new(move |x, y| (2.0 * x / w - 1.0, 2.0 * y / h - 1.0))
        }
        Coords::Pixel => Box::new(|x, y| (x, y)),
    };
    let mut boxes = Vec::with_capacity(raw.boxes.len());
    for (i, [x0, y0, x1, y1]) in raw.boxes.iter().copied().enumerate() {
        if !(x0 <= x1 && y0 <= y1) {
            return Err(format!("box {i}: need x_min <= x_max and y_min <= y_max, got {:?}", [x0, y0, x1, y1]));
        }
        let (a, b) = to_norm(x0, y0);
        let (c, d) = to_norm(x1, y1);
        boxes.push(BoundingBox::new(a, b, c, d).map_err(|e| format!("box {i}: {e}"))?);
    }
    let mut keypoints = Vec::with_capacity(raw.keypoints.len());
    for (i, [x, y]) in raw.keypoints.iter().copied().enumerate() {
        let (x, y) = to_norm(x, y);
        if !(x.is_finite() && y.is_finite() && (-1.0..=1.0).contains(&x) && (-1.0..=1.0).contains(&y)) {
            return Err(format!("keypoint {i} at ({x}, {y}) outside [-1, 1]"));
        }
        keypoints.push((x, y));
    }
    Ok(AnnotationRecord { image_path: image_path.to_string_lossy().into_owned(), label: raw.label, boxes, keypoints })
}

fn resolve(base: &Path, image_path: &str) -> PathBuf {
    let p = Path::new(image_path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Writes records with normalized coordinates, one JSON object per line.
pub fn write_manifest<W: Write>(mut w: W, records: &[RawRecord]) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

impl RawRecord {
    pub fn normalized(image_path: String, label: String, boxes: &[BoundingBox]) -> Self {
        Self {
            image_path,
            label,
            coords: Coords::Normalized,
            boxes: boxes.iter().map(|b| [b.x_min(), b.y_min(), b.x_max(), b.y_max()]).collect(),
            keypoints: Vec::new(),
        }
    }
}
