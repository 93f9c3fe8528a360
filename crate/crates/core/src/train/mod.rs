//! Two-stage training: regression warmup, freezing, then reward-driven
//! optimization of the policy and value heads (or a prior-driven baseline).

mod data;
mod optim;
mod stage;
mod steps;

pub use data::{draw_batch, prepare_sample, Batch, FeatureBank, HeadInput, Sample};
pub use optim::AdamW;
pub use stage::{gt_cell_iou, run_prior, run_rl, run_warmup, EpochLog, StageReport, LOG_FILE, CHECKPOINT_DIR};
pub use steps::{Source, 
    freeze_after_warmup, prior_loss, prior_step, rl_loss, rl_step, warmup_loss, warmup_step, StepStats,
};

use crate::error::{Error, Result};
use crate::kv::Kv;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Warmup,
    Rl,
    Prior,
}

/// What the second stage trains the localization map with.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    /// Reward-driven policy.
    Relo,
    CornerPrior,
    CenterHeatmap,
    IouHeatmap,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Relo => "relo",
            Variant::CornerPrior => "corner-prior",
            Variant::CenterHeatmap => "center-heatmap",
            Variant::IouHeatmap => "iou-heatmap",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "relo" => Ok(Variant::Relo),
            "corner-prior" => Ok(Variant::CornerPrior),
            "center-heatmap" => Ok(Variant::CenterHeatmap),
            "iou-heatmap" => Ok(Variant::IouHeatmap),
            _ => Err(Error::Config(format!("unknown variant {s:?}"))),
        }
    }

    pub fn stage(self) -> Stage {
        match self {
            Variant::Relo => Stage::Rl,
            _ => Stage::Prior,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub variant: Variant,
    pub warmup_epochs: usize,
    /// Clips per warmup epoch.
    pub warmup_clips: usize,
    pub warmup_clip_len: usize,
    pub rl_epochs: usize,
    /// Clips per RL (or baseline) epoch.
    pub rl_clips: usize,
    /// Clips per optimization step.
    pub batch: usize,
    /// Head learning rate during warmup.
    pub warmup_lr: f64,
    /// Encoder rate as a fraction of the warmup head rate.
    pub encoder_lr_ratio: f64,
    pub rl_lr: f64,
    pub weight_decay: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Fraction of epochs after which rates drop by `decay_factor`.
    pub decay_fraction: f64,
    pub decay_factor: f64,
    pub giou_weight: f64,
    pub l1_weight: f64,
    pub search_factor: f64,
    pub template_factor: f64,
    /// Search-window center jitter, relative to the target side.
    pub center_jitter: f64,
    /// Search-window log-scale jitter.
    pub scale_jitter: f64,
    pub max_stride: usize,
    /// Gaussian width of the center-heatmap target, in cells.
    pub heatmap_sigma: f64,
    /// Clips encoded once and reused by frozen-backbone stages; 0 encodes live.
    pub bank_clips: usize,
    pub unfreeze_encoder: bool,
    pub unfreeze_regression: bool,
    /// Train every module jointly from scratch (regression and RL losses summed).
    pub no_warmup: bool,
    /// Write a checkpoint every this many epochs; 0 keeps only the final one.
    pub checkpoint_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            variant: Variant::Relo,
            warmup_epochs: 20,
            warmup_clips: 2000,
            warmup_clip_len: 2,
            rl_epochs: 20,
            rl_clips: 500,
            batch: 8,
            warmup_lr: 1e-3,
            encoder_lr_ratio: 0.1,
            rl_lr: 1e-3,
            weight_decay: 1e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            decay_fraction: 0.8,
            decay_factor: 0.1,
            giou_weight: 2.0,
            l1_weight: 5.0,
            search_factor: 4.0,
            template_factor: 2.0,
            center_jitter: 0.5,
            scale_jitter: 0.15,
            max_stride: 10,
            heatmap_sigma: 1.0,
            bank_clips: 0,
            unfreeze_encoder: false,
            unfreeze_regression: false,
            no_warmup: false,
            checkpoint_every: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.batch == 0 || self.warmup_clip_len == 0 || self.max_stride == 0 {
            return bad("batch, warmup clip length and stride must be positive");
        }
        if !(self.warmup_lr > 0.0 && self.rl_lr > 0.0 && self.encoder_lr_ratio > 0.0) {
            return bad("learning rates must be positive");
        }
        if !(0.0..=1.0).contains(&self.decay_fraction) || !(self.decay_factor > 0.0) {
            return bad("decay fraction must lie in [0, 1] and the factor be positive");
        }
        if self.search_factor <= 0.0 || self.template_factor <= 0.0 {
            return bad("crop factors must be positive");
        }
        if self.center_jitter < 0.0 || self.center_jitter > 1.5 || self.scale_jitter < 0.0 {
            return bad("jitter must be non-negative and keep the target in the window");
        }
        if self.weight_decay < 0.0 || self.heatmap_sigma < 0.0 {
            return bad("weight decay and heatmap sigma must be non-negative");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) || !(self.adam_eps > 0.0) {
            return bad("adam moments must lie in [0, 1) with positive epsilon");
        }
        Ok(())
    }

    /// Number of epochs after which the decayed rate applies.
    pub fn decay_epoch(&self, epochs: usize) -> usize {
        (self.decay_fraction * epochs as f64).round() as usize
    }

    pub fn write_kv(&self, kv: &mut Kv, prefix: &str) {
        let k = |n: &str| format!("{prefix}{n}");
        kv.set(&k("variant"), self.variant.name());
        kv.set(&k("warmup_epochs"), self.warmup_epochs);
        kv.set(&k("warmup_clips"), self.warmup_clips);
        kv.set(&k("warmup_clip_len"), self.warmup_clip_len);
        kv.set(&k("rl_epochs"), self.rl_epochs);
        kv.set(&k("rl_clips"), self.rl_clips);
        kv.set(&k("batch"), self.batch);
        kv.set(&k("warmup_lr"), self.warmup_lr);
        kv.set(&k("encoder_lr_ratio"), self.encoder_lr_ratio);
        kv.set(&k("rl_lr"), self.rl_lr);
        kv.set(&k("weight_decay"), self.weight_decay);
        kv.set(&k("adam_beta1"), self.adam_beta1);
        kv.set(&k("adam_beta2"), self.adam_beta2);
        kv.set(&k("adam_eps"), self.adam_eps);
        kv.set(&k("decay_fraction"), self.decay_fraction);
        kv.set(&k("decay_factor"), self.decay_factor);
        kv.set(&k("giou_weight"), self.giou_weight);
        kv.set(&k("l1_weight"), self.l1_weight);
        kv.set(&k("search_factor"), self.search_factor);
        kv.set(&k("template_factor"), self.template_factor);
        kv.set(&k("center_jitter"), self.center_jitter);
        kv.set(&k("scale_jitter"), self.scale_jitter);
        kv.set(&k("max_stride"), self.max_stride);
        kv.set(&k("heatmap_sigma"), self.heatmap_sigma);
        kv.set(&k("bank_clips"), self.bank_clips);
        kv.set(&k("unfreeze_encoder"), self.unfreeze_encoder);
        kv.set(&k("unfreeze_regression"), self.unfreeze_regression);
        kv.set(&k("no_warmup"), self.no_warmup);
        kv.set(&k("checkpoint_every"), self.checkpoint_every);
        kv.set(&k("seed"), self.seed);
    }

    pub fn read_kv(kv: &Kv, prefix: &str) -> Result<Self> {
        let d = TrainConfig::default();
        let k = |n: &str| format!("{prefix}{n}");
        let c = TrainConfig {
            variant: Variant::parse(kv.get_str(&k("variant")).unwrap_or(d.variant.name()))?,
            warmup_epochs: kv.get_or(&k("warmup_epochs"), d.warmup_epochs)?,
            warmup_clips: kv.get_or(&k("warmup_clips"), d.warmup_clips)?,
            warmup_clip_len: kv.get_or(&k("warmup_clip_len"), d.warmup_clip_len)?,
            rl_epochs: kv.get_or(&k("rl_epochs"), d.rl_epochs)?,
            rl_clips: kv.get_or(&k("rl_clips"), d.rl_clips)?,
            batch: kv.get_or(&k("batch"), d.batch)?,
            warmup_lr: kv.get_or(&k("warmup_lr"), d.warmup_lr)?,
            encoder_lr_ratio: kv.get_or(&k("encoder_lr_ratio"), d.encoder_lr_ratio)?,
            rl_lr: kv.get_or(&k("rl_lr"), d.rl_lr)?,
            weight_decay: kv.get_or(&k("weight_decay"), d.weight_decay)?,
            adam_beta1: kv.get_or(&k("adam_beta1"), d.adam_beta1)?,
            adam_beta2: kv.get_or(&k("adam_beta2"), d.adam_beta2)?,
            adam_eps: kv.get_or(&k("adam_eps"), d.adam_eps)?,
            decay_fraction: kv.get_or(&k("decay_fraction"), d.decay_fraction)?,
            decay_factor: kv.get_or(&k("decay_factor"), d.decay_factor)?,
            giou_weight: kv.get_or(&k("giou_weight"), d.giou_weight)?,
            l1_weight: kv.get_or(&k("l1_weight"), d.l1_weight)?,
            search_factor: kv.get_or(&k("search_factor"), d.search_factor)?,
            template_factor: kv.get_or(&k("template_factor"), d.template_factor)?,
            center_jitter: kv.get_or(&k("center_jitter"), d.center_jitter)?,
            scale_jitter: kv.get_or(&k("scale_jitter"), d.scale_jitter)?,
            max_stride: kv.get_or(&k("max_stride"), d.max_stride)?,
            heatmap_sigma: kv.get_or(&k("heatmap_sigma"), d.heatmap_sigma)?,
            bank_clips: kv.get_or(&k("bank_clips"), d.bank_clips)?,
            unfreeze_encoder: kv.get_or(&k("unfreeze_encoder"), d.unfreeze_encoder)?,
            unfreeze_regression: kv.get_or(&k("unfreeze_regression"), d.unfreeze_regression)?,
            no_warmup: kv.get_or(&k("no_warmup"), d.no_warmup)?,
            checkpoint_every: kv.get_or(&k("checkpoint_every"), d.checkpoint_every)?,
            seed: kv.get_or(&k("seed"), d.seed)?,
        };
        c.validate()?;
        Ok(c)
    }
}

/// Learning rates `(encoder, heads)` for an epoch of a stage.
///
/// Warmup runs the encoder at `encoder_lr_ratio` times the head rate; the
/// second stage uses one rate for everything it updates. Both drop by
/// `decay_factor` once `decay_fraction` of the epochs have passed.
pub fn lr_schedule(epoch: usize, epochs: usize, stage: Stage, cfg: &TrainConfig) -> (f64, f64) {
    let decay = if epoch >= cfg.decay_epoch(epochs) && epochs > 0 {
        cfg.decay_factor
    } else {
        1.0
    };
    match stage {
        Stage::Warmup => (cfg.warmup_lr * cfg.encoder_lr_ratio * decay, cfg.warmup_lr * decay),
        Stage::Rl | Stage::Prior => (cfg.rl_lr * decay, cfg.rl_lr * decay),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_decays_at_eighty_percent() {
        let c = TrainConfig::default();
        assert_eq!(c.decay_epoch(90), 72);
        assert_eq!(c.decay_epoch(20), 16);
        let (e, h) = lr_schedule(15, 20, Stage::Warmup, &c);
        assert_eq!(h, c.warmup_lr);
        assert!((e - h / 10.0).abs() < 1e-18);
        let (_, h2) = lr_schedule(16, 20, Stage::Warmup, &c);
        assert!((h2 - h / 10.0).abs() < 1e-18);
        let (a, b) = lr_schedule(0, 20, Stage::Rl, &c);
        assert_eq!(a, b);
    }

    #[test]
    fn kv_round_trip() {
        let c = TrainConfig {
            variant: Variant::IouHeatmap,
            unfreeze_encoder: true,
            ..TrainConfig::default()
        };
        let mut kv = Kv::new();
        c.write_kv(&mut kv, "train.");
        assert_eq!(TrainConfig::read_kv(&kv, "train.").unwrap(), c);
    }
}
