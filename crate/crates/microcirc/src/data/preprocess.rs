//! Frame ingestion: center-crop to square, bilinear resize, and scaling of
//! 8-bit RGB pixels to [0, 1].

use std::path::Path;

use image::DynamicImage;

use crate::tensor::{Elem, Tensor};

use super::{DataError, Result};

/// Load one frame and produce a 3×H×W tensor in [0, 1].
pub fn load_and_preprocess<E: Elem>(
    path: &Path,
    target_h: usize,
    target_w: usize,
) -> Result<Tensor<E>> {
    let img = image::open(path).map_err(|e| DataError::BadImage {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    let rgb = match img {
        DynamicImage::ImageRgb8(rgb) => rgb,
        other => {
            return Err(DataError::BadImage {
                path: path.display().to_string(),
                reason: format!("expected 8-bit RGB, got {:?}", other.color()),
            })
        }
    };
    let (w, h) = rgb.dimensions();
    preprocess_rgb8(rgb.as_raw(), h as usize, w as usize, target_h, target_w)
}

/// Same pipeline for an in-memory interleaved RGB8 buffer.
pub fn preprocess_rgb8<E: Elem>(
    pixels: &[u8],
    h: usize,
    w: usize,
    target_h: usize,
    target_w: usize,
) -> Result<Tensor<E>> {
    if pixels.len() != h * w * 3 {
        return Err(DataError::Invalid(format!(
            "buffer of {} bytes is not {h}x{w} RGB",
            pixels.len()
        )));
    }
    if target_h == 0 || target_w == 0 {
        return Err(DataError::Invalid("target size must be positive".into()));
    }
    // center-crop to square
    let side = h.min(w);
    let top = (h - side) / 2;
    let left = (w - side) / 2;
    let mut planes = vec![0.0f64; 3 * side * side];
    for y in 0..side {
        for x in 0..side {
            let src = ((top + y) * w + (left + x)) * 3;
            for c in 0..3 {
                planes[c * side * side + y * side + x] = pixels[src + c] as f64 / 255.0;
            }
        }
    }
    let resized = bilinear_resize(&planes, side, side, target_h, target_w);
    let data: Vec<E> = resized.into_iter().map(E::from_f64).collect();
    Ok(Tensor::from_vec(&[3, target_h, target_w], data)?)
}

/// Bilinear resampling with half-pixel-center source coordinates:
/// src = (dst + 0.5) · scale − 0.5, clamped to the image. With equal source
/// and target sizes this is exactly the identity.
fn bilinear_resize(planes: &[f64], h: usize, w: usize, th: usize, tw: usize) -> Vec<f64> {
    let mut out = vec![0.0; 3 * th * tw];
    let sy = h as f64 / th as f64;
    let sx = w as f64 / tw as f64;
    for c in 0..3 {
        let plane = &planes[c * h * w..(c + 1) * h * w];
        for y in 0..th {
            let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(h - 1);
            let wy = fy - y0 as f64;
            for x in 0..tw {
                let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(w - 1);
                let wx = fx - x0 as f64;
                let top = plane[y0 * w + x0] * (1.0 - wx) + plane[y0 * w + x1] * wx;
                let bottom = plane[y1 * w + x0] * (1.0 - wx) + plane[y1 * w + x1] * wx;
                out[c * th * tw + y * tw + x] = top * (1.0 - wy) + bottom * wy;
            }
        }
    }
    out
}
