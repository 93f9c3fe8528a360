use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{save_checkpoint, Model};
use crate::rl::{OldPolicy, PolicyOptimizer, RlConfig};
use crate::synthworld::Sequence;

use super::data::{draw_batch, FeatureBank};
use super::optim::AdamW;
use super::steps::{freeze_after_warmup, prior_step, rl_step, warmup_step, Source, StepStats};
use super::{lr_schedule, Stage, TrainConfig, Variant};

pub const LOG_FILE: &str = "log.csv";
pub const CHECKPOINT_DIR: &str = "checkpoint";

/// One CSV row. For the warmup stage both reward columns hold the
/// ground-truth-cell IoU.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub mean_reward: f64,
    pub mean_clip_iou: f64,
    pub lr: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StageReport {
    pub epochs: Vec<EpochLog>,
    pub skipped_frames: usize,
}

impl StageReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,loss,mean_reward,mean_clip_iou,lr\n");
        for e in &self.epochs {
            let _ = writeln!(s, "{},{:.8},{:.8},{:.8},{:e}", e.epoch, e.loss, e.mean_reward, e.mean_clip_iou, e.lr);
        }
        s
    }
}

struct Runner<'a> {
    out: Option<&'a Path>,
    stage: &'static str,
    report: StageReport,
    every: usize,
}

impl Runner<'_> {
    fn start(&self) -> Result<()> {
        if let Some(dir) = self.out {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        Ok(())
    }

    fn step(&mut self, epoch: usize, step: usize, r: Result<StepStats>, acc: &mut [f64; 4]) -> Result<()> {
        let s = match r {
            Ok(s) => s,
            Err(e @ Error::Numerical(_)) => {
                if let Some(dir) = self.out {
                    let text = format!("stage={}\nepoch={}\nstep={}\nerror={}\n", self.stage, epoch + 1, step, e);
                    let p = dir.join("diagnostic.txt");
                    fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
                    let _ = fs::write(dir.join(LOG_FILE), self.report.to_csv());
                }
                return Err(e);
            }
            Err(e) => return Err(e),
        };
        self.report.skipped_frames += s.skipped;
        acc[0] += s.loss;
        acc[1] += s.mean_reward;
        acc[2] += s.mean_iou;
        acc[3] += 1.0;
        Ok(())
    }

    fn end_epoch(&mut self, model: &Model, epoch: usize, epochs: usize, acc: [f64; 4], lr: f64) -> Result<()> {
        let n = acc[3].max(1.0);
        let e = EpochLog {
            epoch: epoch + 1,
            loss: acc[0] / n,
            mean_reward: acc[1] / n,
            mean_clip_iou: acc[2] / n,
            lr,
        };
        info!(
            "{} epoch {}/{}: loss {:.4} reward {:.4} iou {:.4}",
            self.stage, e.epoch, epochs, e.loss, e.mean_reward, e.mean_clip_iou
        );
        self.report.epochs.push(e);
        if let Some(dir) = self.out {
            let p = dir.join(LOG_FILE);
            fs::write(&p, self.report.to_csv()).map_err(|e| Error::io(&p, e))?;
            if self.every > 0 && (epoch + 1) % self.every == 0 && epoch + 1 < epochs {
                save_checkpoint(model, &dir.join(format!("epoch_{:03}", epoch + 1)))?;
            }
            if epoch + 1 == epochs {
                save_checkpoint(model, &dir.join(CHECKPOINT_DIR))?;
            }
        }
        Ok(())
    }
}

fn steps_per_epoch(clips: usize, batch: usize) -> usize {
    clips.div_ceil(batch).max(1)
}

fn stage_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn optimizer(model: &Model, tcfg: &TrainConfig) -> AdamW {
    AdamW::new(model.params.len(), tcfg.adam_beta1, tcfg.adam_beta2, tcfg.adam_eps, tcfg.weight_decay)
}

/// Regression warmup on clips of `warmup_clip_len` frames with every module
/// but the policy, value and corner heads trainable.
pub fn run_warmup(model: &mut Model, train: &[Sequence], tcfg: &TrainConfig, out: Option<&Path>) -> Result<StageReport> {
    tcfg.validate()?;
    model.params.set_all_trainable(false);
    model.set_encoder_trainable(true);
    model.set_trainable(crate::model::REG_PREFIX, true);
    let mut rng = stage_rng(tcfg.seed, 1);
    let mut opt = optimizer(model, tcfg);
    let mut run = Runner {
        out,
        stage: "warmup",
        report: StageReport::default(),
        every: tcfg.checkpoint_every,
    };
    run.start()?;
    let epochs = tcfg.warmup_epochs;
    for epoch in 0..epochs {
        let lr = lr_schedule(epoch, epochs, Stage::Warmup, tcfg);
        let mut acc = [0.0; 4];
        for step in 0..steps_per_epoch(tcfg.warmup_clips, tcfg.batch) {
            let batch = draw_batch(train, model, tcfg, tcfg.warmup_clip_len, &mut rng)?;
            let r = warmup_step(model, &mut opt, &batch, tcfg, lr);
            run.step(epoch, step, r, &mut acc)?;
        }
        run.end_epoch(model, epoch, epochs, acc, lr.1)?;
    }
    Ok(run.report)
}

fn second_stage_setup(model: &mut Model, train: &[Sequence], tcfg: &TrainConfig, rl: &RlConfig, rng: &mut ChaCha8Rng) -> Result<Option<FeatureBank>> {
    if tcfg.no_warmup {
        model.params.set_all_trainable(true);
    } else {
        freeze_after_warmup(model, tcfg);
    }
    let frozen = !tcfg.no_warmup && !tcfg.unfreeze_encoder && !tcfg.unfreeze_regression;
    if frozen && tcfg.bank_clips > 0 {
        Ok(Some(FeatureBank::build(model, train, tcfg, rl.clip_len, tcfg.bank_clips, rng)?))
    } else {
        Ok(None)
    }
}

/// Reward-driven optimization of the policy (and value) head.
pub fn run_rl(model: &mut Model, train: &[Sequence], tcfg: &TrainConfig, rl: &RlConfig, out: Option<&Path>) -> Result<StageReport> {
    tcfg.validate()?;
    rl.validate()?;
    let mut rng = stage_rng(tcfg.seed, 2);
    let bank = second_stage_setup(model, train, tcfg, rl, &mut rng)?;
    let src = match &bank {
        Some(b) => Source::Bank(b),
        None => Source::Live(train),
    };
    let mut old = match rl.optimizer {
        PolicyOptimizer::ActorCritic => None,
        o => Some(OldPolicy::new(o, rl.refresh_period, &model.params)?),
    };
    let mut opt = optimizer(model, tcfg);
    let mut run = Runner {
        out,
        stage: "rl",
        report: StageReport::default(),
        every: tcfg.checkpoint_every,
    };
    run.start()?;
    let epochs = tcfg.rl_epochs;
    for epoch in 0..epochs {
        let (_, lr) = lr_schedule(epoch, epochs, Stage::Rl, tcfg);
        let mut acc = [0.0; 4];
        for step in 0..steps_per_epoch(tcfg.rl_clips, tcfg.batch) {
            let r = rl_step(model, &mut opt, &src, tcfg, rl, old.as_mut(), lr, &mut rng);
            run.step(epoch, step, r, &mut acc)?;
        }
        run.end_epoch(model, epoch, epochs, acc, lr)?;
    }
    Ok(run.report)
}

/// Trains a prior-driven baseline map under the same budget as [`run_rl`].
pub fn run_prior(model: &mut Model, train: &[Sequence], tcfg: &TrainConfig, rl: &RlConfig, out: Option<&Path>) -> Result<StageReport> {
    tcfg.validate()?;
    if tcfg.variant == Variant::Relo {
        return Err(Error::Config("run_prior needs a baseline variant".into()));
    }
    let mut rng = stage_rng(tcfg.seed, 3);
    let bank = second_stage_setup(model, train, tcfg, rl, &mut rng)?;
    let src = match &bank {
        Some(b) => Source::Bank(b),
        None => Source::Live(train),
    };
    let mut opt = optimizer(model, tcfg);
    let mut run = Runner {
        out,
        stage: "prior",
        report: StageReport::default(),
        every: tcfg.checkpoint_every,
    };
    run.start()?;
    let epochs = tcfg.rl_epochs;
    for epoch in 0..epochs {
        let (_, lr) = lr_schedule(epoch, epochs, Stage::Prior, tcfg);
        let mut acc = [0.0; 4];
        for step in 0..steps_per_epoch(tcfg.rl_clips, tcfg.batch) {
            let r = prior_step(model, &mut opt, &src, tcfg, rl, lr, &mut rng);
            run.step(epoch, step, r, &mut acc)?;
        }
        run.end_epoch(model, epoch, epochs, acc, lr)?;
    }
    Ok(run.report)
}

/// Mean IoU of the regression head's box at the ground-truth cell over
/// `clips` jittered single-frame crops of `seqs`, drawn from `seed`.
pub fn gt_cell_iou(model: &Model, seqs: &[Sequence], tcfg: &TrainConfig, clips: usize, seed: u64) -> Result<f64> {
    let mut rng = stage_rng(seed, 9);
    let (cells, grid) = (model.cfg.search_tokens(), model.cfg.search_grid());
    let (mut s, mut n) = (0.0, 0usize);
    let mut left = clips;
    while left > 0 {
        let cfg = TrainConfig {
            batch: left.min(tcfg.batch),
            ..tcfg.clone()
        };
        left -= cfg.batch;
        let batch = draw_batch(seqs, model, &cfg, 1, &mut rng)?;
        let mut g = crate::autograd::Graph::new();
        let mut binder = crate::model::Binder::new(&model.params);
        let input = super::HeadInput::encode(model, &mut g, &mut binder, &batch)?;
        let (_, ious, _) = super::warmup_loss(&mut g, &input, cells, grid, &cfg)?;
        s += ious.iter().sum::<f64>();
        n += ious.len();
    }
    if n == 0 {
        return Err(Error::invalid("no frame had its target center inside the window"));
    }
    Ok(s / n as f64)
}
