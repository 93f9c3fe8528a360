//! Differentiable box and heatmap losses shared by the warmup stage and the
//! prior-driven baselines.

use crate::autograd::{Graph, Tensor, Var};
use crate::geometry::BBox;

/// Rows `rows` of a `[n, 4]` box tensor, as a new `[rows.len(), 4]` tensor.
pub fn gather_boxes(g: &mut Graph, boxes: Var, rows: &[usize]) -> Var {
    let idx: Vec<(usize, usize)> = rows.iter().flat_map(|&r| (0..4).map(move |c| (r, c))).collect();
    let col = g.pick(boxes, &idx);
    g.reshape(col, rows.len(), 4)
}

fn target_cols(g: &mut Graph, target: &[BBox]) -> [Var; 4] {
    let col = |f: fn(&BBox) -> f64| Tensor::from_vec(target.len(), 1, target.iter().map(f).collect());
    [
        g.constant(col(|b| b.x1)),
        g.constant(col(|b| b.y1)),
        g.constant(col(|b| b.x2)),
        g.constant(col(|b| b.y2)),
    ]
}

/// Per-row generalized IoU `[n, 1]` between predicted `(x1, y1, x2, y2)` rows
/// and fixed targets of positive area.
pub fn giou_rows(g: &mut Graph, pred: Var, target: &[BBox]) -> Var {
    let p: Vec<Var> = (0..4).map(|c| g.slice_cols(pred, c, 1)).collect();
    let t = target_cols(g, target);
    let pw = g.sub(p[2], p[0]);
    let ph = g.sub(p[3], p[1]);
    let pa = g.mul(pw, ph);
    let tw = g.sub(t[2], t[0]);
    let th = g.sub(t[3], t[1]);
    let ta = g.mul(tw, th);

    let ix1 = g.maximum(p[0], t[0]);
    let iy1 = g.maximum(p[1], t[1]);
    let ix2 = g.minimum(p[2], t[2]);
    let iy2 = g.minimum(p[3], t[3]);
    let iw = g.sub(ix2, ix1);
    let iw = g.relu(iw);
    let ih = g.sub(iy2, iy1);
    let ih = g.relu(ih);
    let inter = g.mul(iw, ih);
    let sum = g.add(pa, ta);
    let union = g.sub(sum, inter);
    let iou = g.div(inter, union);

    let ex1 = g.minimum(p[0], t[0]);
    let ey1 = g.minimum(p[1], t[1]);
    let ex2 = g.maximum(p[2], t[2]);
    let ey2 = g.maximum(p[3], t[3]);
    let ew = g.sub(ex2, ex1);
    let eh = g.sub(ey2, ey1);
    let enclosing = g.mul(ew, eh);
    let slack = g.sub(enclosing, union);
    let frac = g.div(slack, enclosing);
    g.sub(iou, frac)
}

/// `mean_rows(w_giou * (1 - GIoU) + w_l1 * mean |pred - target|)`.
pub fn box_regression_loss(g: &mut Graph, pred: Var, target: &[BBox], w_giou: f64, w_l1: f64) -> Var {
    let gi = giou_rows(g, pred, target);
    let gl = g.mean(gi);
    // mean(1 - giou) = 1 - mean(giou)
    let gl = g.scale(gl, -w_giou);
    let gl = g.add_scalar(gl, w_giou);
    let flat: Vec<f64> = target.iter().flat_map(|b| [b.x1, b.y1, b.x2, b.y2]).collect();
    let t = g.constant(Tensor::from_vec(target.len(), 4, flat));
    let d = g.sub(pred, t);
    let a = g.abs(d);
    let l1 = g.mean(a);
    let l1 = g.scale(l1, w_l1);
    g.add(gl, l1)
}

/// Quality-focal binary loss on sigmoid probabilities of `logits`
/// against soft targets in `[0, 1]`, normalized by the target mass:
/// `-sum |y - p|^2 (y log p + (1 - y) log(1 - p)) / max(sum y, 1)`.
pub fn quality_focal_loss(g: &mut Graph, logits: Var, target: &Tensor) -> Var {
    let p = g.sigmoid(logits);
    // keeps log finite when a logit saturates
    let pc = g.clamp(p, 1e-12, 1.0 - 1e-12);
    let y = g.constant(target.clone());
    let ny = g.constant(Tensor::from_vec(target.rows, target.cols, target.data.iter().map(|v| 1.0 - v).collect()));
    let lp = g.log(pc);
    let one_minus = g.scale(pc, -1.0);
    let one_minus = g.add_scalar(one_minus, 1.0);
    let lq = g.log(one_minus);
    let pos = g.mul(y, lp);
    let neg = g.mul(ny, lq);
    let ce = g.add(pos, neg);
    let d = g.sub(p, y);
    let w = g.square(d);
    let wce = g.mul(w, ce);
    let s = g.sum(wce);
    let mass: f64 = target.data.iter().sum::<f64>().max(1.0);
    g.scale(s, -1.0 / mass)
}

/// Normalized cell-center coordinates of a `grid x grid` map as two
/// `[grid * grid, 1]` columns (x, y).
pub fn cell_center_columns(grid: usize) -> (Tensor, Tensor) {
    let n = grid as f64;
    let cells = grid * grid;
    let xs = (0..cells).map(|k| ((k % grid) as f64 + 0.5) / n).collect();
    let ys = (0..cells).map(|k| ((k / grid) as f64 + 0.5) / n).collect();
    (Tensor::from_vec(cells, 1, xs), Tensor::from_vec(cells, 1, ys))
}

/// Expected cell-center coordinates under `softmax(logits)`, each `[batch, 1]`.
pub fn corner_expectation(g: &mut Graph, logits: Var, grid: usize) -> (Var, Var) {
    let ls = g.log_softmax_rows(logits);
    let p = g.exp(ls);
    let (cx, cy) = cell_center_columns(grid);
    let cx = g.constant(cx);
    let cy = g.constant(cy);
    (g.matmul(p, cx), g.matmul(p, cy))
}

/// Mean absolute error between expectation-decoded corners and target corners.
pub fn corner_l1_loss(g: &mut Graph, tl_logits: Var, br_logits: Var, grid: usize, target: &[BBox]) -> Var {
    let (x1, y1) = corner_expectation(g, tl_logits, grid);
    let (x2, y2) = corner_expectation(g, br_logits, grid);
    let pred = g.concat_cols(&[x1, y1, x2, y2]);
    let flat: Vec<f64> = target.iter().flat_map(|b| [b.x1, b.y1, b.x2, b.y2]).collect();
    let t = g.constant(Tensor::from_vec(target.len(), 4, flat));
    let d = g.sub(pred, t);
    let a = g.abs(d);
    g.mean(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::giou;

    #[test]
    fn giou_rows_matches_closed_form() {
        let pred = [BBox::new(0.1, 0.1, 0.5, 0.6), BBox::new(0.6, 0.6, 0.9, 0.8), BBox::new(0.2, 0.3, 0.4, 0.5)];
        let gt = [BBox::new(0.2, 0.2, 0.6, 0.5), BBox::new(0.1, 0.1, 0.3, 0.4), BBox::new(0.2, 0.3, 0.4, 0.5)];
        let mut g = Graph::new();
        let flat: Vec<f64> = pred.iter().flat_map(|b| [b.x1, b.y1, b.x2, b.y2]).collect();
        let p = g.constant(Tensor::from_vec(3, 4, flat));
        let v = giou_rows(&mut g, p, &gt);
        for i in 0..3 {
            let want = giou(&pred[i], &gt[i]).unwrap();
            assert!((g.value(v).data[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn regression_loss_is_zero_at_target() {
        let gt = [BBox::new(0.2, 0.2, 0.6, 0.5)];
        let mut g = Graph::new();
        let p = g.constant(Tensor::from_vec(1, 4, vec![0.2, 0.2, 0.6, 0.5]));
        let l = box_regression_loss(&mut g, p, &gt, 2.0, 5.0);
        assert!(g.value(l).item().abs() < 1e-12);
    }

    #[test]
    fn gather_picks_whole_rows() {
        let mut g = Graph::new();
        let b = g.constant(Tensor::from_vec(3, 4, (0..12).map(f64::from).collect()));
        let r = gather_boxes(&mut g, b, &[2, 0]);
        assert_eq!(g.value(r).data, vec![8.0, 9.0, 10.0, 11.0, 0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn focal_loss_vanishes_on_exact_prediction() {
        // logits whose sigmoid equals the soft target
        let y = [0.25, 0.5, 0.75, 0.9];
        let logits: Vec<f64> = y.iter().map(|p: &f64| (p / (1.0 - p)).ln()).collect();
        let mut g = Graph::new();
        let l = g.constant(Tensor::from_vec(1, 4, logits));
        let loss = quality_focal_loss(&mut g, l, &Tensor::from_vec(1, 4, y.to_vec()));
        assert!(g.value(loss).item().abs() < 1e-12);

        let mut g = Graph::new();
        let l = g.constant(Tensor::from_vec(1, 2, vec![40.0, 0.0]));
        let loss = quality_focal_loss(&mut g, l, &Tensor::from_vec(1, 2, vec![0.0, 1.0]));
        assert!(g.value(loss).item() > 0.0);
    }

    #[test]
    fn corner_expectation_of_peaked_maps() {
        let mut logits = vec![-50.0; 16];
        logits[5] = 50.0;
        let mut g = Graph::new();
        let l = g.constant(Tensor::from_vec(1, 16, logits));
        let (x, y) = corner_expectation(&mut g, l, 4);
        assert!((g.value(x).item() - 0.375).abs() < 1e-12);
        assert!((g.value(y).item() - 0.375).abs() < 1e-12);
    }
}
