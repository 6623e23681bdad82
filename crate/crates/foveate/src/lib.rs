//! File formats, the model-bridge client and the `foveate` command line,
//! on top of the `foveate-core` algorithms.

pub mod bridge;
pub mod cli;
pub mod commands;
pub mod config;
pub mod heatmap;
pub mod manifest;
pub mod oracles;
pub mod raster;

pub use foveate_core as core;
