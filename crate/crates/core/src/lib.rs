//! Foveated retinotopic sampling and the evaluation machinery built on it.
//!
//! The crate is `no_std` with `alloc`: every operation is a pure function of
//! in-memory rasters. File formats, the model bridge client and the command
//! line live in the `foveate` crate.
//!
//! Coordinates are normalized to `[-1, 1]` on both axes with `y` growing
//! downward (raster order). Pixel `(row, col)` of an `H x W` raster has its
//! center at `((2 col + 1) / W - 1, (2 row + 1) / H - 1)`.

#![no_std]

extern crate alloc;

#[cfg(feature = "std")]
extern crate std;

pub mod attacks;
pub mod datasets;
mod error;
pub mod image;
pub mod imgops;
pub mod localize;
pub mod oracle;
pub mod retina;

pub use error::{Error, Result};
pub use image::ImageBuffer;
pub use retina::{FixationPoint, LogPolarGrid};
