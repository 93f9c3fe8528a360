//! Frame-by-frame inference with carried temporal tokens and greedy cell
//! selection.

use std::fs;
use std::path::Path;

use image::{GrayImage, Luma};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Graph, Tensor};
use crate::error::{Error, Result};
use crate::geometry::{crop_window, iou, window_to_image, BBox};
use crate::imaging::{crop_resize, Frame};
use crate::metrics::{aggregate, evaluate_sequence, EvalReport};
use crate::model::{Binder, Model};
use crate::priors::{cell_of, corner_expectation_decode};
use crate::rl::{argmax, policy_distribution};
use crate::synthworld::{format_annotations, Sequence};

/// How a cell (or box) is chosen from the heads.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Localizer {
    /// Argmax of the policy (or heatmap) logits, box from the regression head.
    Policy,
    /// Expectation-decoded corner maps.
    Corner,
    /// Uniformly random cell, box from the regression head.
    Random { seed: u64 },
}

#[derive(Clone, Debug)]
pub struct TrackerState {
    /// Patchified template crops `[template_tokens, patch_dim]`.
    pub template: Tensor,
    /// Previous predicted box in pixels.
    pub previous: BBox,
    /// Temporal token sets carried from the previous frame.
    pub tokens: Vec<Tensor>,
    /// Frames seen so far, 1 after initialization.
    pub frame: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackOutput {
    pub bbox: BBox,
    /// Softmax over the cells (the top-left map for the corner localizer).
    pub scores: Vec<f64>,
    pub cell: usize,
}

pub struct Tracker<'a> {
    model: &'a Model,
    localizer: Localizer,
    pub search_factor: f64,
    pub template_factor: f64,
    rng: ChaCha8Rng,
}

impl<'a> Tracker<'a> {
    pub fn new(model: &'a Model, localizer: Localizer) -> Self {
        let seed = match localizer {
            Localizer::Random { seed } => seed,
            _ => 0,
        };
        Tracker {
            model,
            localizer,
            search_factor: 4.0,
            template_factor: 2.0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn init(&self, frame: &Frame, gt: &BBox) -> Result<TrackerState> {
        let (w, h) = (frame.width() as f64, frame.height() as f64);
        if !gt.is_valid() || gt.area() <= 0.0 || gt.x2 <= 0.0 || gt.y2 <= 0.0 || gt.x1 >= w || gt.y1 >= h {
            return Err(Error::invalid(format!("initial box {gt:?} is not inside the {w}x{h} frame")));
        }
        let cfg = &self.model.cfg;
        let window = crop_window(gt, self.template_factor, cfg.template_size)?;
        let crop = crop_resize(frame, &window);
        let templates = vec![crop; cfg.templates];
        let template = self.model.patch_rows(&templates, cfg.template_size)?;
        Ok(TrackerState {
            template,
            previous: *gt,
            tokens: Vec::new(),
            frame: 1,
        })
    }

    pub fn track(&mut self, state: &mut TrackerState, frame: &Frame) -> Result<TrackOutput> {
        let model = self.model;
        let cfg = &model.cfg;
        let window = crop_window(&state.previous, self.search_factor, cfg.search_size)?;
        let crop = crop_resize(frame, &window);
        let search = model.patch_rows(&[crop], cfg.search_size)?;
        let mut g = Graph::new();
        let mut b = Binder::new(&model.params);
        let z = g.constant(state.template.clone());
        let x = g.constant(search);
        let prev: Vec<_> = state.tokens.iter().map(|t| g.constant(t.clone())).collect();
        let enc = model.encode(&mut g, &mut b, z, x, 1, &prev)?;
        let grid = cfg.search_grid();
        let (local, scores, cell) = match self.localizer {
            Localizer::Corner => {
                let (tl, br) = model.corner_logits(&mut g, &mut b, enc.features, 1)?;
                let pt = policy_distribution(&g.value(tl).data)?;
                let pb = policy_distribution(&g.value(br).data)?;
                let bx = corner_expectation_decode(&pt, &pb, grid, grid)?;
                let (cx, cy) = bx.center();
                let (i, j) = cell_of(cx, cy, grid, grid);
                (bx, pt, i * grid + j)
            }
            Localizer::Policy | Localizer::Random { .. } => {
                let logits = model.policy_logits(&mut g, &mut b, enc.features, 1);
                let scores = policy_distribution(&g.value(logits).data)?;
                let cell = match self.localizer {
                    Localizer::Random { .. } => self.rng.gen_range(0..scores.len()),
                    _ => argmax(&scores),
                };
                let boxes = model.regression(&mut g, &mut b, enc.features, 1);
                let r = g.value(boxes).row(cell);
                (BBox::new(r[0], r[1], r[2], r[3]), scores, cell)
            }
        };
        let bbox = window_to_image(&local, &window).clamp_to(frame.width() as f64, frame.height() as f64, 1.0);
        state.tokens = enc.temporal.iter().map(|&v| g.value(v).clone()).collect();
        state.previous = bbox;
        state.frame += 1;
        Ok(TrackOutput { bbox, scores, cell })
    }
}

/// Predicted boxes and per-frame score maps of one sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceResult {
    pub name: String,
    pub boxes: Vec<BBox>,
    pub scores: Vec<Vec<f64>>,
}

/// Initializes on the first frame and tracks the rest. Frame 1 reports the
/// ground truth, with a one-hot score map on the cell holding its center.
pub fn run_sequence(model: &Model, seq: &Sequence, localizer: Localizer) -> Result<SequenceResult> {
    if seq.is_empty() {
        return Err(Error::invalid(format!("sequence {} has no frames", seq.name)));
    }
    let mut tracker = Tracker::new(model, localizer);
    let mut state = tracker.init(&seq.frames[0], &seq.gt[0])?;
    let cells = model.cfg.search_tokens();
    let mut first = vec![0.0; cells];
    let grid = model.cfg.search_grid();
    let (i, j) = cell_of(0.5, 0.5, grid, grid);
    first[i * grid + j] = 1.0;
    let mut boxes = vec![seq.gt[0]];
    let mut scores = vec![first];
    for f in &seq.frames[1..] {
        let out = tracker.track(&mut state, f)?;
        boxes.push(out.bbox);
        scores.push(out.scores);
    }
    Ok(SequenceResult {
        name: seq.name.clone(),
        boxes,
        scores,
    })
}

/// Writes `<dir>/<name>.txt` in the annotation format.
pub fn write_results(dir: &Path, result: &SequenceResult) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let p = dir.join(format!("{}.txt", result.name));
    fs::write(&p, format_annotations(&result.boxes, None)).map_err(|e| Error::io(&p, e))
}

/// Grayscale image of a score map, scaled so the largest probability is 255
/// and each cell drawn as a `cell_px` square.
pub fn score_map_image(scores: &[f64], grid: usize, cell_px: u32) -> GrayImage {
    let max = scores.iter().cloned().fold(0.0, f64::max);
    let s = grid as u32 * cell_px;
    GrayImage::from_fn(s, s, |x, y| {
        let k = (y / cell_px) as usize * grid + (x / cell_px) as usize;
        let v = if max > 0.0 { scores[k] / max } else { 0.0 };
        Luma([(v * 255.0).round() as u8])
    })
}

/// One PNG per frame under `<dir>/<sequence>/00000001.png`, ...
pub fn write_score_maps(dir: &Path, result: &SequenceResult, grid: usize) -> Result<()> {
    let d = dir.join(&result.name);
    fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    for (k, s) in result.scores.iter().enumerate() {
        let p = d.join(format!("{:08}.png", k + 1));
        score_map_image(s, grid, 8)
            .save(&p)
            .map_err(|e| Error::Image { path: p.clone(), source: e })?;
    }
    Ok(())
}

/// Mean IoU over visible frames after the first.
pub fn mean_tracking_iou(results: &[SequenceResult], seqs: &[Sequence]) -> Result<f64> {
    let (mut s, mut n) = (0.0, 0usize);
    for (r, q) in results.iter().zip(seqs) {
        for k in 1..q.len() {
            if !q.absent[k] {
                s += iou(&r.boxes[k], &q.gt[k])?;
                n += 1;
            }
        }
    }
    if n == 0 {
        return Err(Error::invalid("no visible frames to score"));
    }
    Ok(s / n as f64)
}

/// Tracks every sequence and scores the results.
pub fn evaluate_model(model: &Model, seqs: &[Sequence], localizer: Localizer) -> Result<(Vec<SequenceResult>, EvalReport)> {
    let mut results = Vec::with_capacity(seqs.len());
    let mut scores = Vec::with_capacity(seqs.len());
    let mut skipped = 0;
    for q in seqs {
        let r = run_sequence(model, q, localizer)?;
        let (s, k) = evaluate_sequence(&q.name, &r.boxes, &q.gt, &q.absent)?;
        skipped += k;
        scores.push(s);
        results.push(r);
    }
    Ok((results, aggregate(scores, skipped)?))
}
