use rand::Rng;

use crate::autograd::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::geometry::{crop_window, image_to_window, BBox, CropWindow};
use crate::imaging::{crop_resize, Crop};
use crate::model::{Binder, Model, ModelConfig};
use crate::synthworld::{augment, sample_clip, Clip, Sequence};

use super::TrainConfig;

/// One clip cropped for training. `targets` are ground-truth boxes normalized
/// to each frame's search window.
#[derive(Clone, Debug)]
pub struct Sample {
    pub templates: Vec<Crop>,
    pub searches: Vec<Crop>,
    pub targets: Vec<BBox>,
}

/// Search windows follow the ground truth with random center and scale
/// jitter, so the crops never depend on the model's own predictions.
pub fn prepare_sample(clip: &Clip, mcfg: &ModelConfig, tcfg: &TrainConfig, rng: &mut impl Rng) -> Result<Sample> {
    let templates = clip
        .template_frames
        .iter()
        .zip(&clip.template_boxes)
        .map(|(f, b)| Ok(crop_resize(f, &crop_window(b, tcfg.template_factor, mcfg.template_size)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut searches = Vec::with_capacity(clip.len());
    let mut targets = Vec::with_capacity(clip.len());
    for (f, b) in clip.frames.iter().zip(&clip.boxes) {
        b.validate()?;
        let s = b.area().sqrt();
        if s <= 0.0 {
            return Err(Error::invalid(format!("zero-area box in {}", clip.sequence)));
        }
        let (cx, cy) = b.center();
        let j = tcfg.center_jitter;
        let dx = if j > 0.0 { rng.gen_range(-j..=j) * s } else { 0.0 };
        let dy = if j > 0.0 { rng.gen_range(-j..=j) * s } else { 0.0 };
        let sj = tcfg.scale_jitter;
        let scale = if sj > 0.0 { rng.gen_range(-sj..=sj).exp() } else { 1.0 };
        let w = CropWindow::new(cx + dx, cy + dy, tcfg.search_factor * s * scale, mcfg.search_size)?;
        searches.push(crop_resize(f, &w));
        targets.push(image_to_window(b, &w));
    }
    Ok(Sample {
        templates,
        searches,
        targets,
    })
}

/// A batch of `size` clips of `len` frames in model input layout.
#[derive(Clone, Debug)]
pub struct Batch {
    pub size: usize,
    pub len: usize,
    /// `[size * template_tokens, patch_dim]`.
    pub template: Tensor,
    /// Per frame, `[size * search_tokens, patch_dim]`.
    pub searches: Vec<Tensor>,
    /// `targets[t][b]`.
    pub targets: Vec<Vec<BBox>>,
}

impl Batch {
    pub fn collate(model: &Model, samples: &[Sample]) -> Result<Self> {
        let size = samples.len();
        let len = samples.first().map_or(0, |s| s.searches.len());
        if size == 0 || len == 0 || samples.iter().any(|s| s.searches.len() != len) {
            return Err(Error::Shape("batch needs equal-length, non-empty clips".into()));
        }
        let templates: Vec<Crop> = samples.iter().flat_map(|s| s.templates.iter().cloned()).collect();
        let mut template = None;
        let mut searches = Vec::with_capacity(len);
        for t in 0..len {
            let frame: Vec<Crop> = samples.iter().map(|s| s.searches[t].clone()).collect();
            let (z, x) = model.patch_inputs(&templates, &frame)?;
            template.get_or_insert(z);
            searches.push(x);
        }
        Ok(Batch {
            size,
            len,
            template: template.expect("non-empty batch"),
            searches,
            targets: (0..len).map(|t| samples.iter().map(|s| s.targets[t]).collect()).collect(),
        })
    }
}

/// Draws `tcfg.batch` augmented clips of `len` frames whose search frames all
/// show the target.
pub fn draw_batch(dataset: &[Sequence], model: &Model, tcfg: &TrainConfig, len: usize, rng: &mut impl Rng) -> Result<Batch> {
    let mut samples = Vec::with_capacity(tcfg.batch);
    let mut attempts = 0;
    while samples.len() < tcfg.batch {
        attempts += 1;
        if attempts > 100 * tcfg.batch {
            return Err(Error::invalid("could not draw clips with a visible target"));
        }
        let clip = sample_clip(dataset, len, model.cfg.templates, tcfg.max_stride, rng)?;
        if clip.absent.iter().any(|&a| a) {
            continue;
        }
        let clip = augment(&clip, rng);
        samples.push(prepare_sample(&clip, &model.cfg, tcfg, rng)?);
    }
    Batch::collate(model, &samples)
}

/// Encoded frames ready for the heads, frame-major: frame `f = t * clips + b`
/// owns rows `f * cells .. (f + 1) * cells`.
pub struct HeadInput {
    pub features: Var,
    /// Regressed boxes `[frames * cells, 4]`.
    pub boxes: Var,
    pub clips: usize,
    pub len: usize,
    /// `targets[t][b]`.
    pub targets: Vec<Vec<BBox>>,
}

impl HeadInput {
    pub fn frames(&self) -> usize {
        self.clips * self.len
    }

    /// Runs the encoder over a batch frame by frame, carrying temporal tokens.
    pub fn encode(model: &Model, g: &mut Graph, b: &mut Binder, batch: &Batch) -> Result<Self> {
        let z = g.constant(batch.template.clone());
        let mut prev = Vec::new();
        let mut feats = Vec::with_capacity(batch.len);
        for x in &batch.searches {
            let x = g.constant(x.clone());
            let enc = model.encode(g, b, z, x, batch.size, &prev)?;
            prev = enc.temporal;
            feats.push(enc.features);
        }
        let features = if feats.len() == 1 { feats[0] } else { g.concat_segments(&feats, 1) };
        let frames = batch.size * batch.len;
        let boxes = model.regression(g, b, features, frames);
        Ok(HeadInput {
            features,
            boxes,
            clips: batch.size,
            len: batch.len,
            targets: batch.targets.clone(),
        })
    }
}

struct BankEntry {
    features: Vec<Tensor>,
    boxes: Vec<Tensor>,
    targets: Vec<BBox>,
}

/// Encoder outputs and regressed boxes of pre-drawn clips, valid while the
/// encoder and regression head stay frozen.
pub struct FeatureBank {
    entries: Vec<BankEntry>,
    len: usize,
    cells: usize,
}

impl FeatureBank {
    pub fn build(model: &Model, dataset: &[Sequence], tcfg: &TrainConfig, len: usize, clips: usize, rng: &mut impl Rng) -> Result<Self> {
        let cells = model.cfg.search_tokens();
        let mut entries = Vec::with_capacity(clips);
        while entries.len() < clips {
            let batch = draw_batch(dataset, model, tcfg, len, rng)?;
            let mut g = Graph::new();
            let mut binder = Binder::new(&model.params);
            let input = HeadInput::encode(model, &mut g, &mut binder, &batch)?;
            let (fv, bv) = (g.value(input.features), g.value(input.boxes));
            for b in 0..batch.size {
                if entries.len() == clips {
                    break;
                }
                let rows = |t: usize| {
                    let f = t * batch.size + b;
                    f * cells..(f + 1) * cells
                };
                entries.push(BankEntry {
                    features: (0..len).map(|t| fv.rows_slice(rows(t))).collect(),
                    boxes: (0..len).map(|t| bv.rows_slice(rows(t))).collect(),
                    targets: (0..len).map(|t| batch.targets[t][b]).collect(),
                });
            }
        }
        Ok(FeatureBank { entries, len, cells })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `clips` entries drawn uniformly with replacement, bound as constants.
    pub fn draw(&self, g: &mut Graph, clips: usize, rng: &mut impl Rng) -> HeadInput {
        let pick: Vec<&BankEntry> = (0..clips).map(|_| &self.entries[rng.gen_range(0..self.entries.len())]).collect();
        let cols = pick[0].features[0].cols;
        let frames = clips * self.len;
        let mut feats = Vec::with_capacity(frames * self.cells * cols);
        let mut boxes = Vec::with_capacity(frames * self.cells * 4);
        for t in 0..self.len {
            for e in &pick {
                feats.extend_from_slice(&e.features[t].data);
                boxes.extend_from_slice(&e.boxes[t].data);
            }
        }
        HeadInput {
            features: g.constant(Tensor::from_vec(frames * self.cells, cols, feats)),
            boxes: g.constant(Tensor::from_vec(frames * self.cells, 4, boxes)),
            clips,
            len: self.len,
            targets: (0..self.len).map(|t| pick.iter().map(|e| e.targets[t]).collect()).collect(),
        }
    }
}
