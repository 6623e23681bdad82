//! Run configuration: a JSON document whose fields command-line flags can
//! override. Reports embed the resolved value.

use std::fs;
use std::path::{Path, PathBuf};

use foveate_core::attacks::{Frame, FrameTransform};
use foveate_core::datasets::{SuiteLayout, DEFAULT_KEYPOINT_THRESHOLD, DEFAULT_SIGMA_COEFF};
use foveate_core::imgops::DEFAULT_MIN_RATIO;
use foveate_core::localize::DEFAULT_GRID_N;
use foveate_core::oracle::{DEFAULT_INPUT_SIZE, DEFAULT_TOY_TEMPERATURE};
use foveate_core::retina::{
    build_grid, DEFAULT_FILL, DEFAULT_LOG_RMAX, DEFAULT_LOG_RMIN, DEFAULT_N_RHO, DEFAULT_N_THETA,
};
use foveate_core::{FixationPoint, LogPolarGrid};
use serde::{Deserialize, Serialize};

pub const BRIDGE_CMD_ENV: &str = "FOVEATE_BRIDGE_CMD";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum OracleKind {
    ToyCartesian,
    ToyRetinotopic,
    Bridge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FrameKind {
    Cartesian,
    Retinotopic,
}

impl From<FrameKind> for Frame {
    fn from(f: FrameKind) -> Self {
        match f {
            FrameKind::Cartesian => Frame::Cartesian,
            FrameKind::Retinotopic => Frame::Retinotopic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub n_rho: usize,
    pub n_theta: usize,
    pub log_rmin: f64,
    pub log_rmax: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { n_rho: DEFAULT_N_RHO, n_theta: DEFAULT_N_THETA, log_rmin: DEFAULT_LOG_RMIN, log_rmax: DEFAULT_LOG_RMAX }
    }
}

impl GridConfig {
    pub fn build(&self, fixation: FixationPoint) -> foveate_core::Result<LogPolarGrid> {
        build_grid(self.n_rho, self.n_theta, self.log_rmin, self.log_rmax, fixation)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Degrees.
    pub rotation: Vec<f64>,
    /// Zoom factors searched by the attack.
    pub zoom_attack: Vec<f64>,
    /// Zoom factors reported in the accuracy curve.
    pub zoom_curve: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            rotation: (-12..=12).map(|k| 15.0 * k as f64).collect(),
            zoom_attack: (1..=10).rev().map(|k| k as f64 / 10.0).collect(),
            zoom_curve: (2..=10).rev().map(|k| k as f64).chain((1..=10).rev().map(|k| k as f64 / 10.0)).collect(),
        }
    }
}

/// Placement of synthetic objects, by preset name or explicitly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LayoutConfig {
    Preset(LayoutPreset),
    Custom(CustomLayout),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayoutPreset {
    Centered,
    UpperArc,
    Scattered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomLayout {
    pub eccentricity: [f64; 2],
    /// `[center, half_width]` in degrees; absent means any azimuth.
    #[serde(default)]
    pub azimuth: Option<[f64; 2]>,
    pub scale: [f64; 2],
    #[serde(default)]
    pub clutter: usize,
}

impl LayoutConfig {
    pub fn layout(&self, size: usize) -> SuiteLayout {
        let base = match self {
            LayoutConfig::Preset(LayoutPreset::Centered) => SuiteLayout::CENTERED,
            LayoutConfig::Preset(LayoutPreset::UpperArc) => SuiteLayout::UPPER_ARC,
            LayoutConfig::Preset(LayoutPreset::Scattered) => SuiteLayout::SCATTERED,
            LayoutConfig::Custom(c) => SuiteLayout {
                eccentricity: (c.eccentricity[0], c.eccentricity[1]),
                azimuth: c.azimuth.map(|[a, b]| (a, b)),
                scale: (c.scale[0], c.scale[1]),
                clutter: c.clutter,
                size,
            },
        };
        SuiteLayout { size, ..base }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyConfig {
    pub temperature: f64,
    /// Synthetic training scenes per class, used when no manifest is given.
    pub train_per_class: usize,
    pub train_layout: LayoutConfig,
    /// Fit on a labeled manifest instead of synthetic scenes.
    pub train_manifest: Option<PathBuf>,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            temperature: DEFAULT_TOY_TEMPERATURE,
            train_per_class: 30,
            train_layout: LayoutConfig::Preset(LayoutPreset::Centered),
            train_manifest: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub count: usize,
    pub size: usize,
    pub layout: LayoutConfig,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { count: 200, size: 224, layout: LayoutConfig::Preset(LayoutPreset::Scattered) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KeypointConfig {
    pub sigma_coeff: f64,
    pub threshold: f64,
}

impl Default for KeypointConfig {
    fn default() -> Self {
        Self { sigma_coeff: DEFAULT_SIGMA_COEFF, threshold: DEFAULT_KEYPOINT_THRESHOLD }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Derived from the oracle when absent.
    pub frame: Option<FrameKind>,
    pub grid: GridConfig,
    pub oracle: OracleKind,
    pub bridge_cmd: Option<String>,
    pub input_size: [usize; 2],
    pub grid_n: usize,
    pub min_ratio: f64,
    pub mask_radius: f64,
    pub fill: f32,
    pub sweeps: SweepConfig,
    pub toy: ToyConfig,
    pub synth: SynthConfig,
    pub keypoints: KeypointConfig,
    pub out: PathBuf,
    pub seed: u64,
    /// Worker threads; absent means available parallelism.
    pub jobs: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            frame: None,
            grid: GridConfig::default(),
            oracle: OracleKind::ToyRetinotopic,
            bridge_cmd: None,
            input_size: [DEFAULT_INPUT_SIZE.0, DEFAULT_INPUT_SIZE.1],
            grid_n: DEFAULT_GRID_N,
            min_ratio: DEFAULT_MIN_RATIO,
            mask_radius: 1.0,
            fill: DEFAULT_FILL,
            sweeps: SweepConfig::default(),
            toy: ToyConfig::default(),
            synth: SynthConfig::default(),
            keypoints: KeypointConfig::default(),
            out: PathBuf::from("out"),
            seed: 0,
            jobs: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        serde_json::from_str(&text).map_err(|source| ConfigError::Json { path: path.to_path_buf(), source })
    }

    pub fn frame_kind(&self) -> FrameKind {
        self.frame.unwrap_or(match self.oracle {
            OracleKind::ToyRetinotopic => FrameKind::Retinotopic,
            OracleKind::ToyCartesian | OracleKind::Bridge => FrameKind::Cartesian,
        })
    }

    pub fn input_size(&self) -> (usize, usize) {
        (self.input_size[0], self.input_size[1])
    }

    /// Fills in derived fields and checks ranges and the frame/oracle pairing.
    pub fn resolve(mut self, env_bridge_cmd: Option<String>) -> Result<Self, ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        let frame = self.frame_kind();
        match (self.oracle, frame) {
            (OracleKind::ToyCartesian, FrameKind::Retinotopic) | (OracleKind::ToyRetinotopic, FrameKind::Cartesian) => {
                return invalid(format!("oracle {:?} cannot read {:?} inputs", self.oracle, frame));
            }
            _ => {}
        }
        self.frame = Some(frame);
        if self.bridge_cmd.is_none() {
            self.bridge_cmd = env_bridge_cmd.filter(|c| !c.trim().is_empty());
        }
        if self.oracle == OracleKind::Bridge && self.bridge_cmd.is_none() {
            return invalid(format!("the bridge oracle needs --bridge-cmd or {BRIDGE_CMD_ENV}"));
        }
        if let Err(e) = self.grid.build(FixationPoint::CENTER) {
            return invalid(format!("grid: {e}"));
        }
        if self.input_size.contains(&0) {
            return invalid(format!("input size {:?}", self.input_size));
        }
        if self.grid_n < 3 || self.grid_n % 2 == 0 {
            return invalid(format!("grid_n {} must be odd and at least 3", self.grid_n));
        }
        if !(self.min_ratio > 0.0 && self.min_ratio <= 1.0) {
            return invalid(format!("min_ratio {} outside (0, 1]", self.min_ratio));
        }
        if !(self.mask_radius > 0.0 && self.mask_radius.is_finite()) {
            return invalid(format!("mask_radius {}", self.mask_radius));
        }
        if !(0.0..=1.0).contains(&self.fill) {
            return invalid(format!("fill {} outside [0, 1]", self.fill));
        }
        if !(self.toy.temperature > 0.0 && self.toy.temperature.is_finite()) {
            return invalid(format!("toy temperature {}", self.toy.temperature));
        }
        if self.toy.train_per_class == 0 && self.toy.train_manifest.is_none() {
            return invalid("toy.train_per_class must be positive".into());
        }
        if self.synth.size < 8 {
            return invalid(format!("synth size {}", self.synth.size));
        }
        let sweeps = &self.sweeps;
        if sweeps.rotation.is_empty() || sweeps.zoom_attack.is_empty() || sweeps.zoom_curve.is_empty() {
            return invalid("sweeps must be non-empty".into());
        }
        if sweeps.rotation.iter().any(|v| !v.is_finite()) {
            return invalid("rotation sweep has a non-finite angle".into());
        }
        let zoom_ok = |v: &f64| (foveate_core::imgops::MIN_ZOOM..=foveate_core::imgops::MAX_ZOOM).contains(v);
        if !sweeps.zoom_attack.iter().chain(&sweeps.zoom_curve).all(zoom_ok) {
            return invalid("zoom factors must lie in [0.05, 20]".into());
        }
        if self.jobs == Some(0) {
            return invalid("jobs must be positive".into());
        }
        if !(self.keypoints.sigma_coeff > 0.0 && (0.0..=1.0).contains(&self.keypoints.threshold)) {
            return invalid("keypoint sigma_coeff must be positive and threshold in [0, 1]".into());
        }
        Ok(self)
    }

    pub fn transform(&self) -> foveate_core::Result<FrameTransform> {
        let mut t = match self.frame_kind() {
            FrameKind::Cartesian => FrameTransform::cartesian(),
            FrameKind::Retinotopic => FrameTransform::retinotopic(self.grid.build(FixationPoint::CENTER)?),
        };
        t.mask_radius = self.mask_radius;
        t.fill = self.fill;
        Ok(t)
    }
}
