//! Handcrafted heatmap targets for the prior-driven baselines and the
//! closed-form versions of their losses.

use crate::error::{Error, Result};
use crate::geometry::{iou, BBox};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeatmapKind {
    CenterGaussian,
    Iou,
    CornerTopLeft,
    CornerBottomRight,
}

/// Row-major `h x w` map with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    pub kind: HeatmapKind,
    pub h: usize,
    pub w: usize,
    pub values: Vec<f64>,
}

impl Heatmap {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.w + j]
    }
}

/// Grid cell `(i, j)` containing a normalized point, clamped to the grid.
pub fn cell_of(x: f64, y: f64, h: usize, w: usize) -> (usize, usize) {
    let i = ((y * h as f64).floor().max(0.0) as usize).min(h - 1);
    let j = ((x * w as f64).floor().max(0.0) as usize).min(w - 1);
    (i, j)
}

/// Gaussian bump around the cell holding the box center, with distances
/// measured between cell centers in cell units. `sigma == 0` gives a one-hot map.
pub fn gaussian_center_heatmap(gt: &BBox, h: usize, w: usize, sigma: f64) -> Result<Heatmap> {
    let (cx, cy) = gt.center();
    if !(0.0..=1.0).contains(&cx) || !(0.0..=1.0).contains(&cy) || h == 0 || w == 0 {
        return Err(Error::invalid(format!("center ({cx}, {cy}) outside the unit square")));
    }
    if !(sigma >= 0.0) {
        return Err(Error::invalid("sigma must be non-negative"));
    }
    let (ci, cj) = cell_of(cx, cy, h, w);
    let mut values = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..w {
            let d2 = (i as f64 - ci as f64).powi(2) + (j as f64 - cj as f64).powi(2);
            values[i * w + j] = if sigma == 0.0 {
                f64::from(d2 == 0.0)
            } else {
                (-d2 / (2.0 * sigma * sigma)).exp()
            };
        }
    }
    Ok(Heatmap {
        kind: HeatmapKind::CenterGaussian,
        h,
        w,
        values,
    })
}

/// IoU of each cell's box with the target.
pub fn iou_heatmap(boxes: &[BBox], gt: &BBox, h: usize, w: usize) -> Result<Heatmap> {
    if boxes.len() != h * w {
        return Err(Error::Shape(format!("{} boxes for a {h}x{w} map", boxes.len())));
    }
    let values = boxes.iter().map(|b| iou(b, gt)).collect::<Result<_>>()?;
    Ok(Heatmap {
        kind: HeatmapKind::Iou,
        h,
        w,
        values,
    })
}

/// Box from the expected cell centers under the two corner distributions.
/// The bottom-right corner is raised to the top-left one if it falls short.
pub fn corner_expectation_decode(p_tl: &[f64], p_br: &[f64], h: usize, w: usize) -> Result<BBox> {
    let expect = |p: &[f64]| -> Result<(f64, f64)> {
        if p.len() != h * w {
            return Err(Error::Shape(format!("{} probabilities for a {h}x{w} map", p.len())));
        }
        let s: f64 = p.iter().sum();
        if (s - 1.0).abs() > 1e-6 || p.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::invalid(format!("corner map is not a distribution (sum {s})")));
        }
        let mut ex = 0.0;
        let mut ey = 0.0;
        for (k, &v) in p.iter().enumerate() {
            ex += v * ((k % w) as f64 + 0.5) / w as f64;
            ey += v * ((k / w) as f64 + 0.5) / h as f64;
        }
        Ok((ex, ey))
    };
    let (x1, y1) = expect(p_tl)?;
    let (x2, y2) = expect(p_br)?;
    Ok(BBox::new(x1, y1, x2.max(x1), y2.max(y1)))
}

/// Closed-form quality-focal map loss on probabilities; see
/// [`crate::losses::quality_focal_loss`] for the trained form.
pub fn focal_map_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::Shape(format!("{} predictions for {} targets", pred.len(), target.len())));
    }
    let mut s = 0.0;
    for (&p, &y) in pred.iter().zip(target) {
        let p = p.clamp(1e-12, 1.0 - 1e-12);
        s -= (y - p).powi(2) * (y * p.ln() + (1.0 - y) * (1.0 - p).ln());
    }
    Ok(s / target.iter().sum::<f64>().max(1.0))
}

/// Mean absolute corner error of the closed-form corner decoding.
pub fn corner_l1(decoded: &BBox, gt: &BBox) -> f64 {
    ((decoded.x1 - gt.x1).abs() + (decoded.y1 - gt.y1).abs() + (decoded.x2 - gt.x2).abs() + (decoded.y2 - gt.y2).abs()) / 4.0
}
