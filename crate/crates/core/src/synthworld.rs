//! Synthetic tracking videos and benchmark-style annotation files.
//!
//! Every sequence is a pure function of its [`WorldSpec`]: a textured shape
//! moves on a bounced random walk over a cluttered gradient background, with
//! look-alike distractors, partial occluders and brightness drift. Boxes are
//! kept on a 1/64 px lattice so that text round trips and flips are exact.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{iou_unchecked, BBox};
use crate::imaging::{self, Frame};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ShapeFamily {
    Rect,
    Ellipse,
    Triangle,
    Diamond,
    Cross,
    Ring,
}

impl ShapeFamily {
    pub const SEEN: [ShapeFamily; 3] = [ShapeFamily::Rect, ShapeFamily::Ellipse, ShapeFamily::Triangle];
    pub const SHIFTED: [ShapeFamily; 3] = [ShapeFamily::Diamond, ShapeFamily::Cross, ShapeFamily::Ring];

    pub fn name(self) -> &'static str {
        match self {
            ShapeFamily::Rect => "rect",
            ShapeFamily::Ellipse => "ellipse",
            ShapeFamily::Triangle => "triangle",
            ShapeFamily::Diamond => "diamond",
            ShapeFamily::Cross => "cross",
            ShapeFamily::Ring => "ring",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "rect" => ShapeFamily::Rect,
            "ellipse" => ShapeFamily::Ellipse,
            "triangle" => ShapeFamily::Triangle,
            "diamond" => ShapeFamily::Diamond,
            "cross" => ShapeFamily::Cross,
            "ring" => ShapeFamily::Ring,
            _ => return Err(Error::Config(format!("unknown shape family {s:?}"))),
        })
    }

    /// Membership test in box-relative coordinates `u, v` in `[-1, 1]`.
    fn contains(self, u: f64, v: f64) -> bool {
        match self {
            ShapeFamily::Rect => u.abs() <= 1.0 && v.abs() <= 1.0,
            ShapeFamily::Ellipse => u * u + v * v <= 1.0,
            ShapeFamily::Triangle => (-1.0..=1.0).contains(&v) && u.abs() <= (v + 1.0) / 2.0,
            ShapeFamily::Diamond => u.abs() + v.abs() <= 1.0,
            ShapeFamily::Cross => {
                (u.abs() <= 1.0 / 3.0 && v.abs() <= 1.0) || (v.abs() <= 1.0 / 3.0 && u.abs() <= 1.0)
            }
            ShapeFamily::Ring => {
                let r = u * u + v * v;
                (0.25..=1.0).contains(&r)
            }
        }
    }
}

struct Palette {
    bg_a: [f64; 3],
    bg_b: [f64; 3],
    target: [f64; 3],
}

const PALETTES: [Palette; 5] = [
    Palette {
        bg_a: [30.0, 40.0, 70.0],
        bg_b: [70.0, 80.0, 110.0],
        target: [235.0, 185.0, 40.0],
    },
    Palette {
        bg_a: [40.0, 70.0, 40.0],
        bg_b: [90.0, 115.0, 75.0],
        target: [225.0, 60.0, 60.0],
    },
    Palette {
        bg_a: [85.0, 85.0, 85.0],
        bg_b: [135.0, 135.0, 135.0],
        target: [50.0, 205.0, 225.0],
    },
    Palette {
        bg_a: [80.0, 50.0, 30.0],
        bg_b: [125.0, 95.0, 60.0],
        target: [205.0, 95.0, 235.0],
    },
    Palette {
        bg_a: [20.0, 80.0, 90.0],
        bg_b: [55.0, 125.0, 125.0],
        target: [245.0, 135.0, 40.0],
    },
];

pub const PALETTE_COUNT: usize = PALETTES.len();
pub const SEEN_PALETTES: [usize; 3] = [0, 1, 2];
pub const SHIFTED_PALETTES: [usize; 2] = [3, 4];

/// Parameters of one synthetic video.
#[derive(Clone, Debug, PartialEq)]
pub struct WorldSpec {
    pub canvas: usize,
    pub length: usize,
    pub shape: ShapeFamily,
    /// Target speed range in px/frame.
    pub velocity: (f64, f64),
    /// Relative amplitude of the periodic size change.
    pub scale_amplitude: f64,
    /// Range of the target's geometric-mean side in px.
    pub size: (f64, f64),
    pub distractors: usize,
    pub occlusion_prob: f64,
    /// Occluder side relative to the target side.
    pub occluder_scale: (f64, f64),
    /// Maximum occluder offset from the target center, relative to target size.
    pub occluder_offset: f64,
    /// Global brightness oscillates in `1 ± brightness_drift`.
    pub brightness_drift: f64,
    pub palette: usize,
    pub seed: u64,
}

impl Default for WorldSpec {
    fn default() -> Self {
        WorldSpec {
            canvas: 128,
            length: 40,
            shape: ShapeFamily::Rect,
            velocity: (0.5, 3.0),
            scale_amplitude: 0.15,
            size: (14.0, 30.0),
            distractors: 2,
            occlusion_prob: 0.05,
            occluder_scale: (0.5, 1.3),
            occluder_offset: 0.4,
            brightness_drift: 0.1,
            palette: 0,
            seed: 0,
        }
    }
}

impl WorldSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.canvas < 64 {
            return bad("canvas must be at least 64");
        }
        if self.length < 2 {
            return bad("sequence length must be at least 2");
        }
        if !(0.0..=1.0).contains(&self.occlusion_prob) {
            return bad("occlusion probability must lie in [0, 1]");
        }
        if self.velocity.0 < 0.0 || self.velocity.1 < self.velocity.0 {
            return bad("velocity range must satisfy 0 <= min <= max");
        }
        if self.size.0 <= 1.0 || self.size.1 < self.size.0 || self.size.1 * 1.6 >= self.canvas as f64 {
            return bad("target size range does not fit the canvas");
        }
        if !(0.0..1.0).contains(&self.scale_amplitude) || !(0.0..1.0).contains(&self.brightness_drift) {
            return bad("amplitudes must lie in [0, 1)");
        }
        if self.palette >= PALETTE_COUNT {
            return bad("unknown palette id");
        }
        if self.occluder_scale.0 <= 0.0 || self.occluder_scale.1 < self.occluder_scale.0 {
            return bad("occluder scale range must be positive and ordered");
        }
        Ok(())
    }
}

/// An annotated video.
#[derive(Clone, Debug, PartialEq)]
pub struct Sequence {
    pub name: String,
    pub frames: Vec<Frame>,
    /// Pixel boxes; absent frames repeat the last visible box.
    pub gt: Vec<BBox>,
    pub absent: Vec<bool>,
}

impl Sequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

fn q64(v: f64) -> f64 {
    (v * 64.0).round() / 64.0
}

fn lattice_box(cx: f64, cy: f64, w: f64, h: f64) -> BBox {
    BBox::new(q64(cx - w / 2.0), q64(cy - h / 2.0), q64(cx + w / 2.0), q64(cy + h / 2.0))
}

struct Mover {
    cx: f64,
    cy: f64,
    vx: f64,
    vy: f64,
    w0: f64,
    h0: f64,
    phase: f64,
    period: f64,
}

impl Mover {
    fn new(rng: &mut ChaCha8Rng, spec: &WorldSpec, size: f64) -> Self {
        let aspect: f64 = rng.gen_range(0.6..1.6);
        let w0 = size * aspect.sqrt();
        let h0 = size / aspect.sqrt();
        let c = spec.canvas as f64;
        let mx = w0 * (1.0 + spec.scale_amplitude) / 2.0 + 1.0;
        let my = h0 * (1.0 + spec.scale_amplitude) / 2.0 + 1.0;
        let speed = if spec.velocity.1 > spec.velocity.0 {
            rng.gen_range(spec.velocity.0..=spec.velocity.1)
        } else {
            spec.velocity.0
        };
        let dir: f64 = rng.gen_range(0.0..2.0 * PI);
        Mover {
            cx: rng.gen_range(mx..c - mx),
            cy: rng.gen_range(my..c - my),
            vx: speed * dir.cos(),
            vy: speed * dir.sin(),
            w0,
            h0,
            phase: rng.gen_range(0.0..2.0 * PI),
            period: rng.gen_range(20.0..60.0),
        }
    }

    fn size_at(&self, t: usize, amp: f64) -> (f64, f64) {
        let s = 1.0 + amp * (self.phase + 2.0 * PI * t as f64 / self.period).sin();
        (self.w0 * s, self.h0 * s)
    }

    fn step(&mut self, rng: &mut ChaCha8Rng, spec: &WorldSpec, t: usize) {
        let (vmin, vmax) = spec.velocity;
        if vmax > 0.0 {
            self.vx += rng.gen_range(-0.3..0.3) * vmax;
            self.vy += rng.gen_range(-0.3..0.3) * vmax;
            let speed = (self.vx * self.vx + self.vy * self.vy).sqrt();
            let target = speed.clamp(vmin, vmax);
            if speed > 0.0 {
                self.vx *= target / speed;
                self.vy *= target / speed;
            }
        }
        self.cx += self.vx;
        self.cy += self.vy;
        let (w, h) = self.size_at(t, spec.scale_amplitude);
        let c = spec.canvas as f64;
        let (lox, hix) = (w / 2.0, c - w / 2.0);
        let (loy, hiy) = (h / 2.0, c - h / 2.0);
        if self.cx < lox {
            self.cx = 2.0 * lox - self.cx;
            self.vx = self.vx.abs();
        } else if self.cx > hix {
            self.cx = 2.0 * hix - self.cx;
            self.vx = -self.vx.abs();
        }
        if self.cy < loy {
            self.cy = 2.0 * loy - self.cy;
            self.vy = self.vy.abs();
        } else if self.cy > hiy {
            self.cy = 2.0 * hiy - self.cy;
            self.vy = -self.vy.abs();
        }
        self.cx = self.cx.clamp(lox, hix);
        self.cy = self.cy.clamp(loy, hiy);
    }

    fn bbox(&self, t: usize, amp: f64) -> BBox {
        let (w, h) = self.size_at(t, amp);
        lattice_box(self.cx, self.cy, w, h)
    }
}

fn fill_shape(img: &mut [[f64; 3]], canvas: usize, b: &BBox, shape: ShapeFamily, color: [f64; 3]) {
    let (cx, cy) = b.center();
    let (hw, hh) = (b.width() / 2.0, b.height() / 2.0);
    if hw <= 0.0 || hh <= 0.0 {
        return;
    }
    let x0 = b.x1.floor().max(0.0) as usize;
    let y0 = b.y1.floor().max(0.0) as usize;
    let x1 = (b.x2.ceil() as usize).min(canvas);
    let y1 = (b.y2.ceil() as usize).min(canvas);
    for y in y0..y1 {
        for x in x0..x1 {
            let u = (x as f64 + 0.5 - cx) / hw;
            let v = (y as f64 + 0.5 - cy) / hh;
            if shape.contains(u, v) {
                // darker core gives the target some internal texture
                let shade = if u * u + v * v < 0.16 { 0.75 } else { 1.0 };
                img[y * canvas + x] = color.map(|c| c * shade);
            }
        }
    }
}

fn fill_rect(img: &mut [[f64; 3]], canvas: usize, b: &BBox, color: [f64; 3]) {
    let (cx, cy) = b.center();
    let (hw, hh) = (b.width() / 2.0, b.height() / 2.0);
    let x0 = b.x1.floor().max(0.0) as usize;
    let y0 = b.y1.floor().max(0.0) as usize;
    let x1 = (b.x2.ceil().max(0.0) as usize).min(canvas);
    let y1 = (b.y2.ceil().max(0.0) as usize).min(canvas);
    for y in y0..y1 {
        for x in x0..x1 {
            let u = (x as f64 + 0.5 - cx) / hw;
            let v = (y as f64 + 0.5 - cy) / hh;
            if u.abs() <= 1.0 && v.abs() <= 1.0 {
                img[y * canvas + x] = color;
            }
        }
    }
}

fn to_frame(img: &[[f64; 3]], canvas: usize, brightness: f64) -> Frame {
    RgbImage::from_fn(canvas as u32, canvas as u32, |x, y| {
        let p = img[y as usize * canvas + x as usize];
        Rgb(p.map(|c| (c * brightness).round().clamp(0.0, 255.0) as u8))
    })
}

fn intersection_area(a: &BBox, b: &BBox) -> f64 {
    let w = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let h = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    w * h
}

/// Renders a sequence. Deterministic in `spec`.
pub fn generate_sequence(spec: &WorldSpec, name: &str) -> Result<Sequence> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.canvas;
    let c = n as f64;
    let pal = &PALETTES[spec.palette];

    // static background: oriented gradient plus flat clutter blobs
    let theta: f64 = rng.gen_range(0.0..2.0 * PI);
    let (dx, dy) = (theta.cos(), theta.sin());
    let mut background = vec![[0.0; 3]; n * n];
    for y in 0..n {
        for x in 0..n {
            let s = ((x as f64 / c - 0.5) * dx + (y as f64 / c - 0.5) * dy + 0.75) / 1.5;
            let s = s.clamp(0.0, 1.0);
            background[y * n + x] = std::array::from_fn(|k| pal.bg_a[k] * (1.0 - s) + pal.bg_b[k] * s);
        }
    }
    for _ in 0..6 {
        let w = rng.gen_range(6.0..24.0);
        let h = rng.gen_range(6.0..24.0);
        let b = BBox::new(0.0, 0.0, w, h);
        let ox = rng.gen_range(0.0..c - w);
        let oy = rng.gen_range(0.0..c - h);
        let blob = BBox::new(b.x1 + ox, b.y1 + oy, b.x2 + ox, b.y2 + oy);
        let tone: f64 = rng.gen_range(0.0..1.0);
        let color = std::array::from_fn(|k| {
            (pal.bg_a[k] * (1.0 - tone) + pal.bg_b[k] * tone) * rng.gen_range(0.7..1.4)
        });
        fill_rect(&mut background, n, &blob, color);
    }

    let size = rng.gen_range(spec.size.0..=spec.size.1);
    let mut target = Mover::new(&mut rng, spec, size);
    let mut distractors: Vec<(Mover, [f64; 3])> = (0..spec.distractors)
        .map(|_| {
            let s = rng.gen_range(spec.size.0..=spec.size.1);
            let m = Mover::new(&mut rng, spec, s);
            let color = pal.target.map(|v| (v + rng.gen_range(-70.0..70.0)).clamp(0.0, 255.0));
            (m, color)
        })
        .collect();
    let occ_color: [f64; 3] = std::array::from_fn(|k| (pal.bg_a[k] + pal.bg_b[k]) / 2.0);
    let b_phase: f64 = rng.gen_range(0.0..2.0 * PI);
    let b_period: f64 = rng.gen_range(15.0..45.0);

    let mut frames = Vec::with_capacity(spec.length);
    let mut gt = Vec::with_capacity(spec.length);
    let mut absent = Vec::with_capacity(spec.length);
    let mut last_visible: Option<BBox> = None;
    for t in 0..spec.length {
        if t > 0 {
            target.step(&mut rng, spec, t);
            for (d, _) in distractors.iter_mut() {
                d.step(&mut rng, spec, t);
            }
        }
        let mut img = background.clone();
        for (d, color) in &distractors {
            fill_shape(&mut img, n, &d.bbox(t, spec.scale_amplitude), spec.shape, *color);
        }
        let tb = target.bbox(t, spec.scale_amplitude);
        fill_shape(&mut img, n, &tb, spec.shape, pal.target);
        let mut hidden = false;
        if rng.gen_bool(spec.occlusion_prob) {
            let s = if spec.occluder_scale.1 > spec.occluder_scale.0 {
                rng.gen_range(spec.occluder_scale.0..=spec.occluder_scale.1)
            } else {
                spec.occluder_scale.0
            };
            let (tcx, tcy) = tb.center();
            let off = spec.occluder_offset;
            let ox = if off > 0.0 { rng.gen_range(-off..=off) * tb.width() } else { 0.0 };
            let oy = if off > 0.0 { rng.gen_range(-off..=off) * tb.height() } else { 0.0 };
            let occ = BBox::from_center(tcx + ox, tcy + oy, tb.width() * s, tb.height() * s);
            fill_rect(&mut img, n, &occ, occ_color);
            hidden = intersection_area(&occ, &tb) > 0.8 * tb.area();
        }
        let brightness = 1.0 + spec.brightness_drift * (b_phase + 2.0 * PI * t as f64 / b_period).sin();
        frames.push(to_frame(&img, n, brightness));
        if hidden {
            gt.push(last_visible.unwrap_or(tb));
        } else {
            last_visible = Some(tb);
            gt.push(tb);
        }
        absent.push(hidden);
    }
    Ok(Sequence {
        name: name.to_string(),
        frames,
        gt,
        absent,
    })
}

/// Split sizes and the base world the splits are drawn around.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitSpec {
    pub seed: u64,
    pub train: usize,
    pub val: usize,
    pub shifted_test: usize,
    pub base: WorldSpec,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            seed: 0,
            train: 64,
            val: 12,
            shifted_test: 12,
            base: WorldSpec::default(),
        }
    }
}

pub struct Splits {
    pub train: Vec<Sequence>,
    pub val: Vec<Sequence>,
    pub shifted_test: Vec<Sequence>,
}

pub const SPLIT_NAMES: [&str; 3] = ["train", "val", "shifted_test"];

/// World specs of one split. Train and val draw from the seen shape families
/// and palettes; shifted_test from disjoint ones.
pub fn split_specs(spec: &SplitSpec, split: &str) -> Result<Vec<(String, WorldSpec)>> {
    let (index, count, families, palettes): (u64, usize, &[ShapeFamily], &[usize]) = match split {
        "train" => (0, spec.train, &ShapeFamily::SEEN, &SEEN_PALETTES),
        "val" => (1, spec.val, &ShapeFamily::SEEN, &SEEN_PALETTES),
        "shifted_test" => (2, spec.shifted_test, &ShapeFamily::SHIFTED, &SHIFTED_PALETTES),
        _ => return Err(Error::invalid(format!("unknown split {split:?}"))),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index + 1);
    Ok((0..count)
        .map(|i| {
            let mut w = spec.base.clone();
            w.shape = families[i % families.len()];
            w.palette = palettes[rng.gen_range(0..palettes.len())];
            w.distractors = rng.gen_range(0..=spec.base.distractors);
            w.seed = rng.gen();
            (format!("{split}-{i:04}"), w)
        })
        .collect())
}

pub fn make_split(spec: &SplitSpec, split: &str) -> Result<Vec<Sequence>> {
    split_specs(spec, split)?
        .iter()
        .map(|(name, w)| generate_sequence(w, name))
        .collect()
}

pub fn make_splits(spec: &SplitSpec) -> Result<Splits> {
    Ok(Splits {
        train: make_split(spec, "train")?,
        val: make_split(spec, "val")?,
        shifted_test: make_split(spec, "shifted_test")?,
    })
}

/// Template frames and `T` ordered search frames from one sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct Clip {
    pub sequence: String,
    pub template_frames: Vec<Frame>,
    pub template_boxes: Vec<BBox>,
    pub frame_indices: Vec<usize>,
    pub frames: Vec<Frame>,
    pub boxes: Vec<BBox>,
    pub absent: Vec<bool>,
}

impl Clip {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Draws a clip: uniform sequence choice, ordered search frames with gaps of
/// at most `max_stride`, and `templates` visible template frames taken at or
/// before the first search frame. Single-frame sequences act as static videos.
pub fn sample_clip(
    dataset: &[Sequence],
    t: usize,
    templates: usize,
    max_stride: usize,
    rng: &mut impl Rng,
) -> Result<Clip> {
    if t == 0 || templates == 0 || max_stride == 0 {
        return Err(Error::invalid("clip length, template count and stride must be positive"));
    }
    let usable: Vec<&Sequence> = dataset
        .iter()
        .filter(|s| (s.len() == 1 || s.len() >= t) && s.absent.iter().any(|a| !a))
        .collect();
    if usable.is_empty() {
        return Err(Error::invalid(format!("no sequence can provide a clip of {t} frames")));
    }
    let seq = usable[rng.gen_range(0..usable.len())];
    let n = seq.len();
    let indices: Vec<usize> = if n == 1 {
        vec![0; t]
    } else {
        let span_limit = n - 1;
        let mut gaps: Vec<usize> = Vec::new();
        for attempt in 0..100 {
            let cap = if attempt < 99 {
                max_stride
            } else {
                max_stride.min(span_limit / (t - 1).max(1)).max(1)
            };
            gaps = (1..t).map(|_| rng.gen_range(1..=cap)).collect();
            if gaps.iter().sum::<usize>() <= span_limit {
                break;
            }
        }
        let span: usize = gaps.iter().sum();
        let start = rng.gen_range(0..=span_limit - span);
        let mut idx = vec![start];
        for g in gaps {
            idx.push(idx.last().unwrap() + g);
        }
        idx
    };
    let first = indices[0];
    let lo = first.saturating_sub(max_stride);
    let visible: Vec<usize> = (lo..=first).filter(|&i| !seq.absent[i]).collect();
    let pool: Vec<usize> = if visible.is_empty() {
        (0..n).filter(|&i| !seq.absent[i]).collect()
    } else {
        visible
    };
    let tpl: Vec<usize> = (0..templates).map(|_| pool[rng.gen_range(0..pool.len())]).collect();
    Ok(Clip {
        sequence: seq.name.clone(),
        template_frames: tpl.iter().map(|&i| seq.frames[i].clone()).collect(),
        template_boxes: tpl.iter().map(|&i| seq.gt[i]).collect(),
        frames: indices.iter().map(|&i| seq.frames[i].clone()).collect(),
        boxes: indices.iter().map(|&i| seq.gt[i]).collect(),
        absent: indices.iter().map(|&i| seq.absent[i]).collect(),
        frame_indices: indices,
    })
}

/// Joint photometric/geometric augmentation with explicit decisions.
pub fn augment_with(clip: &Clip, flip: bool, brightness: f64) -> Clip {
    let mut out = clip.clone();
    let apply = |frames: &mut Vec<Frame>, boxes: &mut Vec<BBox>| {
        for (f, b) in frames.iter_mut().zip(boxes.iter_mut()) {
            if flip {
                *b = b.flip_horizontal(f.width() as f64);
                *f = imaging::flip_horizontal(f);
            }
            *f = imaging::scale_brightness(f, brightness);
        }
    };
    apply(&mut out.template_frames, &mut out.template_boxes);
    apply(&mut out.frames, &mut out.boxes);
    out
}

/// Flips every frame with probability 0.5 and scales brightness by one
/// factor drawn from `[0.8, 1.2]`.
pub fn augment(clip: &Clip, rng: &mut impl Rng) -> Clip {
    let flip = rng.gen_bool(0.5);
    let brightness = rng.gen_range(0.8..=1.2);
    augment_with(clip, flip, brightness)
}

/// Parsed annotation file. Absent lines are forward filled from the last
/// present box (or back filled from the first one).
#[derive(Clone, Debug, PartialEq)]
pub struct Annotations {
    pub boxes: Vec<BBox>,
    pub absent: Vec<bool>,
}

pub fn parse_annotations(text: &str, path: &Path) -> Result<Annotations> {
    let mut raw: Vec<Option<BBox>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r').trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let vals: Vec<f64> = line
            .split([',', '\t', ' '])
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().map_err(|_| err(format!("bad number {s:?}"))))
            .collect::<Result<_>>()?;
        if vals.len() != 4 {
            return Err(err(format!("expected 4 values, found {}", vals.len())));
        }
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(err("non-finite value".into()));
        }
        let [x, y, w, h] = [vals[0], vals[1], vals[2], vals[3]];
        raw.push(if w > 0.0 && h > 0.0 {
            Some(BBox::from_xywh(x, y, w, h))
        } else {
            None
        });
    }
    let Some(first) = raw.iter().flatten().next().copied() else {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: "no visible box".into(),
        });
    };
    let mut last = first;
    let mut boxes = Vec::with_capacity(raw.len());
    let mut absent = Vec::with_capacity(raw.len());
    for r in raw {
        match r {
            Some(b) => {
                last = b;
                boxes.push(b);
                absent.push(false);
            }
            None => {
                boxes.push(last);
                absent.push(true);
            }
        }
    }
    Ok(Annotations { boxes, absent })
}

pub fn load_annotations(path: &Path) -> Result<Annotations> {
    if !path.exists() {
        return Err(Error::Missing(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_annotations(&text, path)
}

/// One `x,y,w,h` line per box; absent frames are written as `0,0,0,0`.
pub fn format_annotations(boxes: &[BBox], absent: Option<&[bool]>) -> String {
    let mut s = String::new();
    for (i, b) in boxes.iter().enumerate() {
        if absent.is_some_and(|a| a[i]) {
            s.push_str("0,0,0,0\n");
        } else {
            let [x, y, w, h] = b.to_xywh();
            let _ = writeln!(s, "{x},{y},{w},{h}");
        }
    }
    s
}

pub fn write_annotations(path: &Path, boxes: &[BBox], absent: Option<&[bool]>) -> Result<()> {
    fs::write(path, format_annotations(boxes, absent)).map_err(|e| Error::io(path, e))
}

pub const GROUNDTRUTH_FILE: &str = "groundtruth.txt";
pub const LIST_FILE: &str = "list.txt";

fn frame_name(i: usize) -> String {
    format!("{:08}.png", i + 1)
}

/// Writes `dir/00000001.png ...` and `dir/groundtruth.txt`.
pub fn write_sequence(dir: &Path, seq: &Sequence) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, f) in seq.frames.iter().enumerate() {
        let p = dir.join(frame_name(i));
        f.save_with_format(&p, image::ImageFormat::Png)
            .map_err(|e| Error::Image { path: p, source: e })?;
    }
    write_annotations(&dir.join(GROUNDTRUTH_FILE), &seq.gt, Some(&seq.absent))
}

pub fn read_sequence(dir: &Path) -> Result<Sequence> {
    let ann = load_annotations(&dir.join(GROUNDTRUTH_FILE))?;
    let mut frames = Vec::with_capacity(ann.boxes.len());
    for i in 0..ann.boxes.len() {
        let p = dir.join(frame_name(i));
        if !p.exists() {
            return Err(Error::Format {
                path: dir.to_path_buf(),
                msg: format!("groundtruth has {} lines but {} is missing", ann.boxes.len(), p.display()),
            });
        }
        let img = image::open(&p).map_err(|e| Error::Image { path: p.clone(), source: e })?;
        frames.push(img.to_rgb8());
    }
    if dir.join(frame_name(ann.boxes.len())).exists() {
        return Err(Error::Format {
            path: dir.to_path_buf(),
            msg: "more frames than groundtruth lines".into(),
        });
    }
    let name = dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(Sequence {
        name,
        frames,
        gt: ann.boxes,
        absent: ann.absent,
    })
}

/// Writes `root/<split>/<seq>/...` plus `root/<split>/list.txt`.
pub fn write_split(root: &Path, split: &str, seqs: &[Sequence]) -> Result<()> {
    let dir = root.join(split);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut list = String::new();
    for s in seqs {
        write_sequence(&dir.join(&s.name), s)?;
        list.push_str(&s.name);
        list.push('\n');
    }
    let p = dir.join(LIST_FILE);
    fs::write(&p, list).map_err(|e| Error::io(&p, e))
}

pub fn split_names(root: &Path, split: &str) -> Result<Vec<String>> {
    let p = root.join(split).join(LIST_FILE);
    if !p.exists() {
        return Err(Error::Missing(p));
    }
    let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    Ok(text
        .lines()
        .map(|l| l.trim().to_string())
        .filter(|l| !l.is_empty())
        .collect())
}

pub fn read_split(root: &Path, split: &str) -> Result<Vec<Sequence>> {
    split_names(root, split)?
        .iter()
        .map(|n| read_sequence(&root.join(split).join(n)))
        .collect()
}

pub fn split_dir(root: &Path, split: &str) -> PathBuf {
    root.join(split)
}

/// Mean IoU between two box lists, for quick sanity checks.
pub fn mean_iou(a: &[BBox], b: &[BBox]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| iou_unchecked(x, y)).sum::<f64>() / a.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn small() -> WorldSpec {
        WorldSpec {
            length: 12,
            ..WorldSpec::default()
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_sequence(&small(), "a").unwrap();
        let b = generate_sequence(&small(), "a").unwrap();
        assert_eq!(a, b);
        let c = generate_sequence(&WorldSpec { seed: 9, ..small() }, "a").unwrap();
        assert_ne!(a.frames, c.frames);
    }

    #[test]
    fn static_world_has_constant_gt() {
        let spec = WorldSpec {
            velocity: (0.0, 0.0),
            scale_amplitude: 0.0,
            occlusion_prob: 0.0,
            ..small()
        };
        let s = generate_sequence(&spec, "s").unwrap();
        assert!(s.gt.iter().all(|b| *b == s.gt[0]));
        assert!(s.absent.iter().all(|a| !a));
    }

    #[test]
    fn forced_full_occlusion_marks_every_frame_absent() {
        let spec = WorldSpec {
            occlusion_prob: 1.0,
            occluder_scale: (1.2, 1.2),
            occluder_offset: 0.0,
            ..small()
        };
        let s = generate_sequence(&spec, "o").unwrap();
        assert!(s.absent.iter().all(|&a| a));
    }

    #[test]
    fn boxes_stay_inside_canvas_and_on_lattice() {
        for seed in 0..5 {
            let s = generate_sequence(&WorldSpec { seed, ..small() }, "x").unwrap();
            for b in &s.gt {
                assert!(b.is_valid());
                assert!(b.x1 >= 0.0 && b.y1 >= 0.0 && b.x2 <= 128.0 && b.y2 <= 128.0);
                for v in [b.x1, b.y1, b.x2, b.y2] {
                    assert_eq!((v * 64.0).fract(), 0.0);
                }
            }
        }
    }

    #[test]
    fn splits_use_disjoint_families() {
        let spec = SplitSpec {
            train: 6,
            val: 3,
            shifted_test: 3,
            ..SplitSpec::default()
        };
        let train = split_specs(&spec, "train").unwrap();
        let test = split_specs(&spec, "shifted_test").unwrap();
        assert_eq!(train.len(), 6);
        for (_, t) in &test {
            assert!(train.iter().all(|(_, w)| w.shape != t.shape && w.palette != t.palette));
        }
        assert_eq!(split_specs(&spec, "val").unwrap(), split_specs(&spec, "val").unwrap());
    }

    #[test]
    fn clip_indices_respect_stride() {
        let seq = generate_sequence(&WorldSpec { length: 30, ..small() }, "c").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let c = sample_clip(std::slice::from_ref(&seq), 5, 1, 4, &mut rng).unwrap();
            for w in c.frame_indices.windows(2) {
                assert!(w[1] > w[0] && w[1] - w[0] <= 4);
            }
        }
        let c = sample_clip(std::slice::from_ref(&seq), 4, 1, 1, &mut rng).unwrap();
        for w in c.frame_indices.windows(2) {
            assert_eq!(w[1], w[0] + 1);
        }
    }

    #[test]
    fn static_image_is_repeated() {
        let mut seq = generate_sequence(&small(), "img").unwrap();
        seq.frames.truncate(1);
        seq.gt.truncate(1);
        seq.absent.truncate(1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = sample_clip(&[seq], 3, 1, 10, &mut rng).unwrap();
        assert_eq!(c.frame_indices, vec![0, 0, 0]);
        assert!(c.frames.iter().all(|f| *f == c.frames[0]));
    }

    #[test]
    fn too_short_everywhere_is_an_error() {
        let seq = generate_sequence(&WorldSpec { length: 3, ..small() }, "s").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_clip(&[seq], 5, 1, 2, &mut rng).is_err());
    }

    #[test]
    fn flip_is_an_involution_and_mirrors_centers() {
        let seq = generate_sequence(&small(), "f").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let clip = sample_clip(&[seq], 3, 1, 2, &mut rng).unwrap();
        let once = augment_with(&clip, true, 1.0);
        assert_eq!(augment_with(&once, true, 1.0), clip);
        for (a, b) in clip.boxes.iter().zip(&once.boxes) {
            assert_eq!(b.center().0, 128.0 - a.center().0);
            assert_eq!(a.area(), b.area());
        }
        assert_eq!(augment_with(&clip, false, 1.0), clip);
    }

    #[test]
    fn annotation_parsing() {
        let p = Path::new("gt.txt");
        let a = parse_annotations("10,20,30,40\r\n0,0,0,0\r\n1.5,2,3,4\r\n", p).unwrap();
        let b = parse_annotations("10,20,30,40\n0,0,0,0\n1.5,2,3,4\n", p).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.boxes[0], BBox::new(10.0, 20.0, 40.0, 60.0));
        assert_eq!(a.absent, vec![false, true, false]);
        assert_eq!(a.boxes[1], a.boxes[0]);
        match parse_annotations("1,2,3,4\n1,2,x,4\n", p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn annotation_text_round_trip() {
        let s = generate_sequence(&small(), "r").unwrap();
        let text = format_annotations(&s.gt, Some(&s.absent));
        let a = parse_annotations(&text, Path::new("x")).unwrap();
        assert_eq!(a.absent, s.absent);
        for (i, b) in a.boxes.iter().enumerate() {
            if !s.absent[i] {
                assert_eq!(*b, s.gt[i]);
            }
        }
    }
}
