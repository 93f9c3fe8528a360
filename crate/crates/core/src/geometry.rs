//! Boxes, overlap measures, and crop-window coordinate transforms.
//!
//! Boxes are stored in corner form `(x1, y1, x2, y2)`. The same type is used
//! for pixel coordinates and for coordinates normalized to a crop window.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub const fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        BBox { x1, y1, x2, y2 }
    }

    /// Builds a box from the `x, y, w, h` convention used by annotation files.
    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Self {
        BBox::new(x, y, x + w, y + h)
    }

    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        BBox::new(cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h)
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.x1 + self.x2), 0.5 * (self.y1 + self.y2))
    }

    /// Center-form view `(cx, cy, w, h)`.
    pub fn to_center_form(&self) -> [f64; 4] {
        let (cx, cy) = self.center();
        [cx, cy, self.width(), self.height()]
    }

    pub fn to_xywh(&self) -> [f64; 4] {
        [self.x1, self.y1, self.width(), self.height()]
    }

    pub fn is_valid(&self) -> bool {
        self.x1.is_finite()
            && self.y1.is_finite()
            && self.x2.is_finite()
            && self.y2.is_finite()
            && self.x1 <= self.x2
            && self.y1 <= self.y2
    }

    pub fn is_normalized(&self) -> bool {
        self.is_valid()
            && [self.x1, self.y1, self.x2, self.y2]
                .iter()
                .all(|v| (0.0..=1.0).contains(v))
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid box {self:?}")))
        }
    }

    /// Mirror horizontally inside a canvas of the given width.
    pub fn flip_horizontal(&self, canvas_width: f64) -> BBox {
        BBox::new(
            canvas_width - self.x2,
            self.y1,
            canvas_width - self.x1,
            self.y2,
        )
    }

    /// Clamp into `[0, w] x [0, h]`, keeping at least `min_size` extent.
    pub fn clamp_to(&self, w: f64, h: f64, min_size: f64) -> BBox {
        let x1 = self.x1.clamp(0.0, (w - min_size).max(0.0));
        let y1 = self.y1.clamp(0.0, (h - min_size).max(0.0));
        let x2 = self.x2.clamp(x1 + min_size, w.max(x1 + min_size));
        let y2 = self.y2.clamp(y1 + min_size, h.max(y1 + min_size));
        BBox::new(x1, y1, x2, y2)
    }

    fn intersection_area(&self, other: &BBox) -> f64 {
        let iw = (self.x2.min(other.x2) - self.x1.max(other.x1)).max(0.0);
        let ih = (self.y2.min(other.y2) - self.y1.max(other.y1)).max(0.0);
        iw * ih
    }
}

/// Intersection over union. Zero when the union has zero area.
pub fn iou(a: &BBox, b: &BBox) -> Result<f64> {
    a.validate()?;
    b.validate()?;
    Ok(iou_unchecked(a, b))
}

pub(crate) fn iou_unchecked(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Generalized IoU. When the enclosing box has zero area the plain IoU is returned.
pub fn giou(a: &BBox, b: &BBox) -> Result<f64> {
    a.validate()?;
    b.validate()?;
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    let iou = if union <= 0.0 { 0.0 } else { inter / union };
    let enclosing = (a.x2.max(b.x2) - a.x1.min(b.x1)) * (a.y2.max(b.y2) - a.y1.min(b.y1));
    if enclosing <= 0.0 {
        return Ok(iou);
    }
    Ok(iou - (enclosing - union) / enclosing)
}

/// Square crop window in image pixels, resampled to `resolution x resolution`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CropWindow {
    pub cx: f64,
    pub cy: f64,
    pub side: f64,
    pub resolution: usize,
}

impl CropWindow {
    pub fn new(cx: f64, cy: f64, side: f64, resolution: usize) -> Result<Self> {
        if !(side > 0.0 && side.is_finite()) || !cx.is_finite() || !cy.is_finite() {
            return Err(Error::invalid(format!("crop side must be positive, got {side}")));
        }
        if resolution == 0 {
            return Err(Error::invalid("crop resolution must be positive"));
        }
        Ok(CropWindow {
            cx,
            cy,
            side,
            resolution,
        })
    }

    /// The window rectangle in image pixels.
    pub fn rect(&self) -> BBox {
        BBox::from_center(self.cx, self.cy, self.side, self.side)
    }
}

/// Square window centred on `gt` with side `factor * sqrt(w * h)`.
pub fn crop_window(gt: &BBox, factor: f64, resolution: usize) -> Result<CropWindow> {
    gt.validate()?;
    if !(factor > 0.0) {
        return Err(Error::invalid(format!("crop factor must be positive, got {factor}")));
    }
    let area = gt.area();
    if area <= 0.0 {
        return Err(Error::invalid(format!("zero-area box {gt:?} cannot define a crop")));
    }
    let (cx, cy) = gt.center();
    CropWindow::new(cx, cy, factor * area.sqrt(), resolution)
}

/// Normalized centre `(u, v)` of action cell `(i, j)` on an `h x w` grid.
pub fn action_cell_center(i: usize, j: usize, h: usize, w: usize) -> Result<(f64, f64)> {
    if i >= h || j >= w {
        return Err(Error::invalid(format!(
            "cell ({i}, {j}) outside {h}x{w} grid"
        )));
    }
    Ok(((j as f64 + 0.5) / w as f64, (i as f64 + 0.5) / h as f64))
}

/// Maps a box normalized to the window into image pixels.
pub fn window_to_image(b: &BBox, window: &CropWindow) -> BBox {
    let r = window.rect();
    let s = window.side;
    BBox::new(r.x1 + b.x1 * s, r.y1 + b.y1 * s, r.x1 + b.x2 * s, r.y1 + b.y2 * s)
}

/// Inverse of [`window_to_image`].
pub fn image_to_window(b: &BBox, window: &CropWindow) -> BBox {
    let r = window.rect();
    let s = window.side;
    BBox::new(
        (b.x1 - r.x1) / s,
        (b.y1 - r.y1) / s,
        (b.x2 - r.x1) / s,
        (b.y2 - r.y1) / s,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2)
    }

    #[test]
    fn iou_examples() {
        assert_eq!(iou(&b(0., 0., 1., 1.), &b(0., 0., 1., 1.)).unwrap(), 1.0);
        assert_eq!(iou(&b(0., 0., 1., 1.), &b(5., 5., 6., 6.)).unwrap(), 0.0);
        let v = iou(&b(0., 0., 2., 2.), &b(1., 1., 3., 3.)).unwrap();
        assert!((v - 1.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn iou_rejects_inverted_box() {
        assert!(iou(&b(2., 0., 1., 1.), &b(0., 0., 1., 1.)).is_err());
    }

    #[test]
    fn iou_degenerate_union_is_zero() {
        let p = b(1., 1., 1., 1.);
        assert_eq!(iou(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn giou_examples() {
        assert_eq!(giou(&b(0., 0., 1., 1.), &b(0., 0., 1., 1.)).unwrap(), 1.0);
        assert_eq!(giou(&b(0., 0., 1., 1.), &b(1., 0., 2., 1.)).unwrap(), 0.0);
        let v = giou(&b(0., 0., 1., 1.), &b(2., 0., 3., 1.)).unwrap();
        assert!((v + 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn crop_window_examples() {
        let w = crop_window(&b(10., 10., 20., 20.), 2.0, 64).unwrap();
        assert_eq!((w.cx, w.cy, w.side), (15.0, 15.0, 20.0));
        assert_eq!(w.rect(), b(5., 5., 25., 25.));
        let w = crop_window(&b(10., 10., 20., 20.), 4.0, 64).unwrap();
        assert_eq!(w.rect(), b(-5., -5., 35., 35.));
        let w = crop_window(&b(3., 4., 9., 10.), 1.0, 8).unwrap();
        assert_eq!(w.rect(), b(3., 4., 9., 10.));
        assert!(crop_window(&b(3., 4., 3., 10.), 2.0, 8).is_err());
    }

    #[test]
    fn cell_centers() {
        assert_eq!(action_cell_center(0, 0, 8, 8).unwrap(), (0.0625, 0.0625));
        assert_eq!(action_cell_center(7, 7, 8, 8).unwrap(), (0.9375, 0.9375));
        assert_eq!(action_cell_center(3, 4, 8, 8).unwrap(), (0.5625, 0.4375));
        assert!(action_cell_center(8, 0, 8, 8).is_err());
    }

    #[test]
    fn window_mapping_examples() {
        let w = CropWindow::new(20.0, 20.0, 40.0, 64).unwrap();
        assert_eq!(window_to_image(&b(0., 0., 1., 1.), &w), w.rect());
        assert_eq!(
            window_to_image(&b(0.25, 0.25, 0.75, 0.75), &w),
            b(10., 10., 30., 30.)
        );
    }

    fn arb_box() -> impl Strategy<Value = BBox> {
        (0.0..100.0f64, 0.0..100.0f64, 0.01..50.0f64, 0.01..50.0f64)
            .prop_map(|(x, y, w, h)| BBox::from_xywh(x, y, w, h))
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in arb_box(), c in arb_box()) {
            let ab = iou(&a, &c).unwrap();
            let ba = iou(&c, &a).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(iou(&a, &a).unwrap(), 1.0);
        }

        #[test]
        fn giou_never_exceeds_iou(a in arb_box(), c in arb_box()) {
            prop_assert!(giou(&a, &c).unwrap() <= iou(&a, &c).unwrap() + 1e-12);
        }

        #[test]
        fn window_round_trip(a in arb_box(), cx in -50.0..150.0f64, cy in -50.0..150.0f64, side in 1.0..300.0f64) {
            let w = CropWindow::new(cx, cy, side, 64).unwrap();
            let back = window_to_image(&image_to_window(&a, &w), &w);
            prop_assert!((back.x1 - a.x1).abs() < 1e-6);
            prop_assert!((back.y1 - a.y1).abs() < 1e-6);
            prop_assert!((back.x2 - a.x2).abs() < 1e-6);
            prop_assert!((back.y2 - a.y2).abs() < 1e-6);
        }

        #[test]
        fn flip_preserves_area(x in 0u32..4096, y in 0u32..4096, w in 1u32..2048, h in 1u32..2048) {
            // coordinates on the 1/64 px lattice used by the generator
            let a = BBox::from_xywh(x as f64 / 64.0, y as f64 / 64.0, w as f64 / 64.0, h as f64 / 64.0);
            prop_assert_eq!(a.flip_horizontal(128.0).area(), a.area());
        }
    }
}
