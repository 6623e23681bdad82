//! PNG/JPEG decoding to unit-interval rasters and 8-bit encoding back.

use std::path::Path;

use foveate_core::ImageBuffer;
use image::{DynamicImage, GrayImage, RgbImage};

#[derive(Debug, thiserror::Error)]
pub enum RasterError {
    #[error("{path}: {source}")]
    Image { path: String, source: image::ImageError },
    #[error("{0}")]
    Core(#[from] foveate_core::Error),
}

/// Decodes any 8-bit image as RGB with values `v / 255`.
pub fn load_image(path: &Path) -> Result<ImageBuffer, RasterError> {
    let img = image::open(path).map_err(|source| RasterError::Image { path: path.display().to_string(), source })?;
    Ok(from_dynamic(&img)?)
}

pub fn from_dynamic(img: &DynamicImage) -> foveate_core::Result<ImageBuffer> {
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    let data = rgb.as_raw().iter().map(|&v| v as f32 / 255.0).collect();
    ImageBuffer::new(h as usize, w as usize, 3, data)
}

fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn to_dynamic(img: &ImageBuffer) -> DynamicImage {
    let (h, w) = img.dims();
    let bytes: Vec<u8> = img.data().iter().map(|&v| quantize(v)).collect();
    if img.channels() == 1 {
        DynamicImage::ImageLuma8(GrayImage::from_raw(w as u32, h as u32, bytes).expect("sized buffer"))
    } else {
        DynamicImage::ImageRgb8(RgbImage::from_raw(w as u32, h as u32, bytes).expect("sized buffer"))
    }
}

/// Encodes by file extension (PNG or JPEG).
pub fn save_image(path: &Path, img: &ImageBuffer) -> Result<(), RasterError> {
    to_dynamic(img).save(path).map_err(|source| RasterError::Image { path: path.display().to_string(), source })
}
