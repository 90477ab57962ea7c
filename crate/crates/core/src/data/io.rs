//! PNG reading and writing.

use std::path::Path;

use adds_autograd::Tensor;
use image::{DynamicImage, ImageBuffer, Luma, Rgb};

use crate::error::{AddsError, Result};
use crate::geometry::DepthMap;

use super::GroundTruthDepth;

fn open(path: &Path) -> Result<DynamicImage> {
    let bytes = std::fs::read(path).map_err(|e| AddsError::io(path, e))?;
    image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
        .map_err(|e| AddsError::Format(format!("{}: {e}", path.display())))
}

/// 8-bit RGB PNG as a `3×H×W` tensor in `[0, 1]`.
pub fn load_rgb(path: &Path) -> Result<Tensor> {
    let img = open(path)?;
    if !matches!(img, DynamicImage::ImageRgb8(_) | DynamicImage::ImageRgba8(_) | DynamicImage::ImageLuma8(_)) {
        return Err(AddsError::Format(format!("{}: expected an 8-bit image", path.display())));
    }
    let rgb = img.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let raw = rgb.as_raw();
    Ok(Tensor::from_fn(&[3, h, w], |i| {
        let (c, p) = (i / (h * w), i % (h * w));
        raw[p * 3 + c] as f64 / 255.0
    }))
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| AddsError::io(dir, e))?;
    }
    Ok(())
}

fn write_png(img: DynamicImage, path: &Path) -> Result<()> {
    ensure_parent(path)?;
    let mut bytes = Vec::new();
    img.write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)
        .map_err(|e| AddsError::Format(format!("{}: {e}", path.display())))?;
    std::fs::write(path, bytes).map_err(|e| AddsError::io(path, e))
}

/// Writes a `3×H×W` tensor (values clamped to `[0, 1]`) as 8-bit RGB.
pub fn save_rgb(image: &Tensor, path: &Path) -> Result<()> {
    let (h, w) = (image.shape()[1], image.shape()[2]);
    let hw = h * w;
    let buf = ImageBuffer::<Rgb<u8>, Vec<u8>>::from_fn(w as u32, h as u32, |x, y| {
        let p = y as usize * w + x as usize;
        Rgb([0, 1, 2].map(|c| to_u8(image.data()[c * hw + p])))
    });
    write_png(DynamicImage::ImageRgb8(buf), path)
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes an `H×W` map with values in `[0, 1]` as 8-bit grayscale.
pub fn save_gray(map: &Tensor, path: &Path) -> Result<()> {
    let s = map.shape();
    let (h, w) = (s[s.len() - 2], s[s.len() - 1]);
    let buf = ImageBuffer::<Luma<u8>, Vec<u8>>::from_fn(w as u32, h as u32, |x, y| {
        Luma([to_u8(map.data()[y as usize * w + x as usize])])
    });
    write_png(DynamicImage::ImageLuma8(buf), path)
}

/// 16-bit single-channel millimeter PNG; zero marks a missing measurement.
pub fn load_gt_depth(path: &Path) -> Result<GroundTruthDepth> {
    let img = open(path)?;
    let DynamicImage::ImageLuma16(buf) = img else {
        return Err(AddsError::Format(format!(
            "{}: ground truth must be a 16-bit single-channel PNG",
            path.display()
        )));
    };
    let (w, h) = (buf.width() as usize, buf.height() as usize);
    let values = Tensor::from_fn(&[h, w], |i| buf.as_raw()[i] as f64 / 1000.0);
    GroundTruthDepth::new(values)
}

/// Millimeter encoding of meters, saturating at the 16-bit range. Values
/// that are not positive are written as 0 (invalid).
fn to_mm(v: f64) -> u16 {
    if v > 0.0 && v.is_finite() {
        (v * 1000.0).round().clamp(0.0, u16::MAX as f64) as u16
    } else {
        0
    }
}

pub fn save_depth_mm(values: &Tensor, path: &Path) -> Result<()> {
    let (h, w) = (values.shape()[0], values.shape()[1]);
    let buf = ImageBuffer::<Luma<u16>, Vec<u16>>::from_fn(w as u32, h as u32, |x, y| {
        Luma([to_mm(values.data()[y as usize * w + x as usize])])
    });
    write_png(DynamicImage::ImageLuma16(buf), path)
}

pub fn save_gt_depth(gt: &GroundTruthDepth, path: &Path) -> Result<()> {
    save_depth_mm(&gt.values, path)
}

pub fn save_depth_map(depth: &DepthMap, path: &Path) -> Result<()> {
    save_depth_mm(depth.values(), path)
}
