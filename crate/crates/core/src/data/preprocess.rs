use adds_autograd::{resize_bilinear_tensor, Tensor};

use crate::error::{invalid, Result};
use crate::geometry::CameraIntrinsics;

pub const RAW_HEIGHT: usize = 960;
pub const RAW_WIDTH: usize = 1280;
/// First row kept by the vertical center crop.
pub const CROP_TOP: usize = 160;
pub const CROP_HEIGHT: usize = 640;
pub const MODEL_HEIGHT: usize = 256;
pub const MODEL_WIDTH: usize = 512;

/// Rows `160..800` of a `C×960×1280` image.
pub fn center_crop(raw: &Tensor) -> Result<Tensor> {
    let s = raw.shape();
    if s.len() != 3 || s[1] != RAW_HEIGHT || s[2] != RAW_WIDTH {
        return Err(invalid(format!(
            "raw image must be C×{RAW_HEIGHT}×{RAW_WIDTH}, got {s:?}"
        )));
    }
    let c = s[0];
    let mut out = Vec::with_capacity(c * CROP_HEIGHT * RAW_WIDTH);
    for ch in 0..c {
        let start = (ch * RAW_HEIGHT + CROP_TOP) * RAW_WIDTH;
        out.extend_from_slice(&raw.data()[start..start + CROP_HEIGHT * RAW_WIDTH]);
    }
    Ok(Tensor::new(&[c, CROP_HEIGHT, RAW_WIDTH], out))
}

/// Bilinear resize of a `C×H×W` image.
pub fn resize(image: &Tensor, height: usize, width: usize) -> Tensor {
    let s = image.shape();
    let out = resize_bilinear_tensor(&image.reshape(&[1, s[0], s[1], s[2]]), height, width);
    out.reshape(&[s[0], height, width])
}

/// Crops a raw `C×960×1280` frame and resizes it to `height × width`. An
/// image already at the target size passes through unchanged.
pub fn preprocess_to(raw: &Tensor, height: usize, width: usize) -> Result<Tensor> {
    let s = raw.shape();
    if s.len() == 3 && s[1] == height && s[2] == width {
        return Ok(raw.clone());
    }
    let cropped = center_crop(raw)?;
    Ok(resize(&cropped, height, width))
}

/// [`preprocess_to`] at the standard `256×512` model input.
pub fn preprocess(raw: &Tensor) -> Result<Tensor> {
    preprocess_to(raw, MODEL_HEIGHT, MODEL_WIDTH)
}

/// Intrinsics matching [`preprocess_to`].
pub fn preprocess_intrinsics(k: &CameraIntrinsics, height: usize, width: usize) -> Result<CameraIntrinsics> {
    if (k.height, k.width) == (height, width) {
        return Ok(*k);
    }
    if (k.height, k.width) != (RAW_HEIGHT, RAW_WIDTH) {
        return Err(invalid(format!(
            "intrinsics are for {}×{}, expected raw {RAW_HEIGHT}×{RAW_WIDTH} or {height}×{width}",
            k.height, k.width
        )));
    }
    let out = k.cropped(CROP_TOP, 0, CROP_HEIGHT, RAW_WIDTH).resized(width, height);
    out.validate()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raw_frame_to_model_size() {
        let raw = Tensor::full(&[3, RAW_HEIGHT, RAW_WIDTH], 0.42);
        let out = preprocess(&raw).unwrap();
        assert_eq!(out.shape(), &[3, 256, 512]);
        assert!(out.data().iter().all(|&v| (v - 0.42).abs() < 1e-12));
        assert!(preprocess(&Tensor::zeros(&[3, 480, 640])).is_err());
    }

    #[test]
    fn intrinsics_follow_crop_and_resize() {
        let k = CameraIntrinsics::new(1000.0, 1000.0, 640.0, 480.0, RAW_WIDTH, RAW_HEIGHT).unwrap();
        let p = preprocess_intrinsics(&k, 256, 512).unwrap();
        assert!((p.fx - 400.0).abs() < 1e-12);
        assert!((p.cx - 256.0).abs() < 1e-12);
        assert!((p.cy - (480.0 - 160.0) * 0.4).abs() < 1e-12);
    }
}
