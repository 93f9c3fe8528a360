//! Raster helpers: crop-and-resample with edge replication, flips, brightness,
//! and patch extraction into model input rows.

use image::{Rgb, RgbImage};

use crate::autograd::Tensor;
use crate::geometry::CropWindow;

pub type Frame = RgbImage;

/// A square crop with channels stored as `f64` in `[0, 1]`, row-major HWC.
#[derive(Clone, Debug, PartialEq)]
pub struct Crop {
    pub resolution: usize,
    pub data: Vec<f64>,
}

/// Bilinear resample of the window; samples outside the frame replicate the border.
pub fn crop_resize(frame: &Frame, window: &CropWindow) -> Crop {
    let res = window.resolution;
    let (fw, fh) = (frame.width() as usize, frame.height() as usize);
    let raw = frame.as_raw();
    let rect = window.rect();
    let step = window.side / res as f64;
    let mut data = vec![0.0; res * res * 3];
    let max_x = (fw - 1) as f64;
    let max_y = (fh - 1) as f64;
    for v in 0..res {
        let sy = (rect.y1 + (v as f64 + 0.5) * step - 0.5).clamp(0.0, max_y);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(fh - 1);
        let wy = sy - y0 as f64;
        for u in 0..res {
            let sx = (rect.x1 + (u as f64 + 0.5) * step - 0.5).clamp(0.0, max_x);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(fw - 1);
            let wx = sx - x0 as f64;
            let out = &mut data[(v * res + u) * 3..(v * res + u) * 3 + 3];
            for (c, o) in out.iter_mut().enumerate() {
                let p = |x: usize, y: usize| raw[(y * fw + x) * 3 + c] as f64;
                let top = p(x0, y0) * (1.0 - wx) + p(x1, y0) * wx;
                let bottom = p(x0, y1) * (1.0 - wx) + p(x1, y1) * wx;
                *o = (top * (1.0 - wy) + bottom * wy) / 255.0;
            }
        }
    }
    Crop {
        resolution: res,
        data,
    }
}

/// Splits a crop into non-overlapping `patch x patch` blocks, one row per block
/// in row-major block order, each row laid out as `(dy, dx, channel)`.
/// Pixel values are centred to `[-0.5, 0.5]`.
pub fn patchify(crop: &Crop, patch: usize) -> Tensor {
    let res = crop.resolution;
    let grid = res / patch;
    let cols = patch * patch * 3;
    let mut out = Tensor::zeros(grid * grid, cols);
    for gy in 0..grid {
        for gx in 0..grid {
            let row = out.row_mut(gy * grid + gx);
            for dy in 0..patch {
                for dx in 0..patch {
                    let src = ((gy * patch + dy) * res + gx * patch + dx) * 3;
                    let dst = (dy * patch + dx) * 3;
                    for c in 0..3 {
                        row[dst + c] = crop.data[src + c] - 0.5;
                    }
                }
            }
        }
    }
    out
}

pub fn flip_horizontal(frame: &Frame) -> Frame {
    image::imageops::flip_horizontal(frame)
}

/// Multiplies every channel by `factor`, rounding and saturating to `u8`.
pub fn scale_brightness(frame: &Frame, factor: f64) -> Frame {
    if factor == 1.0 {
        return frame.clone();
    }
    let mut out = frame.clone();
    for p in out.pixels_mut() {
        let Rgb(c) = *p;
        *p = Rgb(c.map(|v| (v as f64 * factor).round().clamp(0.0, 255.0) as u8));
    }
    out
}
