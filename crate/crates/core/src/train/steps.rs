use rand::Rng;

use crate::autograd::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::losses::{box_regression_loss, corner_l1_loss, gather_boxes, quality_focal_loss};
use crate::model::{collect_grads, Binder, Model, ENCODER_PREFIXES, REG_PREFIX};
use crate::priors::{cell_of, corner_expectation_decode, gaussian_center_heatmap, iou_heatmap};
use crate::rl::{
    actor_critic_loss, argmax, clip_rewards_weighted, grpo_advantages, grpo_loss, policy_distribution, ppo_loss,
    sample_action, value_loss, OldPolicy, PolicyOptimizer, RlConfig,
};

use super::data::HeadInput;
use super::optim::AdamW;
use super::{TrainConfig, Variant};

/// Per-step quantities for logging.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepStats {
    pub loss: f64,
    pub mean_reward: f64,
    pub mean_iou: f64,
    /// Frames left out of a regression loss because the target center fell
    /// outside the search window.
    pub skipped: usize,
}

fn box_at(t: &Tensor, row: usize) -> BBox {
    let r = t.row(row);
    BBox::new(r[0], r[1], r[2], r[3])
}

/// Reward statistics of the chosen cells: `actions[f]` for frame-major `f`.
fn greedy_stats(input: &HeadInput, boxes: &Tensor, actions: &[usize], rl: &RlConfig, cells: usize) -> Result<(f64, f64)> {
    let sel: Vec<BBox> = actions.iter().enumerate().map(|(f, &a)| box_at(boxes, f * cells + a)).collect();
    clip_stats(input, &sel, rl)
}

fn clip_stats(input: &HeadInput, sel: &[BBox], rl: &RlConfig) -> Result<(f64, f64)> {
    let (mut rs, mut is) = (0.0, 0.0);
    for b in 0..input.clips {
        let chosen: Vec<BBox> = (0..input.len).map(|t| sel[t * input.clips + b]).collect();
        let gt: Vec<BBox> = (0..input.len).map(|t| input.targets[t][b]).collect();
        let r = clip_rewards_weighted(&chosen, &gt, rl.iou_weight, rl.lambda)?;
        let ious = clip_rewards_weighted(&chosen, &gt, 1.0, 0.0)?;
        rs += r.iter().sum::<f64>();
        is += ious.iter().sum::<f64>();
    }
    let n = input.frames() as f64;
    Ok((rs / n, is / n))
}

/// Regression loss at each frame's ground-truth cell. Returns the loss (if any
/// frame qualifies), the gt-cell IoUs and the number of skipped frames.
pub fn warmup_loss(g: &mut Graph, input: &HeadInput, cells: usize, grid: usize, tcfg: &TrainConfig) -> Result<(Option<Var>, Vec<f64>, usize)> {
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    let mut skipped = 0;
    for t in 0..input.len {
        for b in 0..input.clips {
            let gt = input.targets[t][b];
            let (cx, cy) = gt.center();
            if !(0.0..1.0).contains(&cx) || !(0.0..1.0).contains(&cy) {
                skipped += 1;
                continue;
            }
            let (i, j) = cell_of(cx, cy, grid, grid);
            rows.push((t * input.clips + b) * cells + i * grid + j);
            targets.push(gt);
        }
    }
    if rows.is_empty() {
        return Ok((None, Vec::new(), skipped));
    }
    let picked = gather_boxes(g, input.boxes, &rows);
    let pv = g.value(picked).clone();
    let ious = targets
        .iter()
        .enumerate()
        .map(|(k, gt)| crate::geometry::iou(&box_at(&pv, k), gt))
        .collect::<Result<Vec<_>>>()?;
    let loss = box_regression_loss(g, picked, &targets, tcfg.giou_weight, tcfg.l1_weight);
    Ok((Some(loss), ious, skipped))
}

fn check_finite(v: f64, what: &str) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Numerical(format!("{what} loss is {v}")))
    }
}

fn apply(model: &mut Model, opt: &mut AdamW, g: &Graph, loss: Var, lr: (f64, f64)) {
    let grads = collect_grads(&model.params, g.backward(loss).params());
    opt.step(&mut model.params, &grads, |name| {
        if ENCODER_PREFIXES.iter().any(|p| name.starts_with(p)) {
            lr.0
        } else {
            lr.1
        }
    });
}

/// One regression-warmup update. `lr` is `(encoder, heads)`.
pub fn warmup_step(model: &mut Model, opt: &mut AdamW, batch: &super::Batch, tcfg: &TrainConfig, lr: (f64, f64)) -> Result<StepStats> {
    let mut g = Graph::new();
    let (cells, grid) = (model.cfg.search_tokens(), model.cfg.search_grid());
    let (loss, ious, skipped) = {
        let mut binder = Binder::new(&model.params);
        let input = HeadInput::encode(model, &mut g, &mut binder, batch)?;
        warmup_loss(&mut g, &input, cells, grid, tcfg)?
    };
    let Some(loss) = loss else {
        return Ok(StepStats {
            skipped,
            ..StepStats::default()
        });
    };
    let lv = g.value(loss).item();
    check_finite(lv, "warmup")?;
    apply(model, opt, &g, loss, lr);
    let mean_iou = ious.iter().sum::<f64>() / ious.len() as f64;
    Ok(StepStats {
        loss: lv,
        mean_reward: mean_iou,
        mean_iou,
        skipped,
    })
}

/// Freezes the encoder (with embeddings and temporal tokens) and the
/// regression head unless the config unfreezes them; every other head trains.
pub fn freeze_after_warmup(model: &mut Model, tcfg: &TrainConfig) {
    model.params.set_all_trainable(true);
    model.set_encoder_trainable(tcfg.unfreeze_encoder);
    model.set_trainable(REG_PREFIX, tcfg.unfreeze_regression);
}

/// Samples actions, scores them and builds the configured policy objective.
/// Returns the loss and `(mean reward, mean IoU)` of the sampled actions.
pub fn rl_loss(
    model: &Model,
    g: &mut Graph,
    binder: &mut Binder,
    input: &HeadInput,
    rl: &RlConfig,
    old: Option<&OldPolicy>,
    rng: &mut impl Rng,
) -> Result<(Var, f64, f64)> {
    let frames = input.frames();
    let cells = model.cfg.search_tokens();
    let logits = model.policy_logits(g, binder, input.features, frames);
    let behaviour = match (rl.optimizer, old) {
        (PolicyOptimizer::ActorCritic, _) => g.value(logits).clone(),
        (_, Some(old)) => {
            let mut ob = Binder::with_overrides(&model.params, old.params());
            let l = model.policy_logits(g, &mut ob, input.features, frames);
            g.value(l).clone()
        }
        (_, None) => return Err(Error::Config(format!("{} needs an old policy", rl.optimizer.name()))),
    };
    let boxes = g.value(input.boxes).clone();
    let dists = (0..frames)
        .map(|f| policy_distribution(behaviour.row(f)))
        .collect::<Result<Vec<_>>>()?;
    let samples = if rl.optimizer == PolicyOptimizer::Grpo { rl.group_size } else { 1 };
    // actions[k][f] with log-probs under the behaviour policy
    let mut actions = vec![vec![0usize; frames]; samples];
    let mut old_lp = vec![vec![0.0; frames]; samples];
    for k in 0..samples {
        for f in 0..frames {
            let (a, lp) = sample_action(&dists[f], rng);
            actions[k][f] = a;
            old_lp[k][f] = lp;
        }
    }
    // rewards[k][f]
    let mut rewards = vec![vec![0.0; frames]; samples];
    let mut ious = vec![vec![0.0; frames]; samples];
    for k in 0..samples {
        for b in 0..input.clips {
            let sel: Vec<BBox> = (0..input.len)
                .map(|t| box_at(&boxes, (t * input.clips + b) * cells + actions[k][t * input.clips + b]))
                .collect();
            let gt: Vec<BBox> = (0..input.len).map(|t| input.targets[t][b]).collect();
            let r = clip_rewards_weighted(&sel, &gt, rl.iou_weight, rl.lambda)?;
            let u = clip_rewards_weighted(&sel, &gt, 1.0, 0.0)?;
            for t in 0..input.len {
                rewards[k][t * input.clips + b] = r[t];
                ious[k][t * input.clips + b] = u[t];
            }
        }
    }
    let n = (samples * frames) as f64;
    let mean_reward = rewards.iter().flatten().sum::<f64>() / n;
    let mean_iou = ious.iter().flatten().sum::<f64>() / n;

    let ls = g.log_softmax_rows(logits);
    let pairs: Vec<(usize, usize)> = (0..samples).flat_map(|k| actions[k].iter().enumerate().map(|(f, &a)| (f, a)).collect::<Vec<_>>()).collect();
    let lp = g.pick(ls, &pairs);

    let loss = match rl.optimizer {
        PolicyOptimizer::Grpo => {
            let mut adv = vec![vec![0.0; frames]; samples];
            for b in 0..input.clips {
                let group: Vec<Vec<f64>> = (0..samples)
                    .map(|k| (0..input.len).map(|t| rewards[k][t * input.clips + b]).collect())
                    .collect();
                let a = grpo_advantages(&group, rl.grpo_eps)?;
                for k in 0..samples {
                    for t in 0..input.len {
                        adv[k][t * input.clips + b] = a[k][t];
                    }
                }
            }
            let adv: Vec<f64> = adv.concat();
            grpo_loss(g, lp, &old_lp.concat(), &adv, rl.ppo_eps)
        }
        opt => {
            let r = &rewards[0];
            let value = if rl.use_value { Some(model.value(g, binder, input.features, frames)) } else { None };
            let adv: Vec<f64> = match value {
                Some(v) => r.iter().zip(&g.value(v).data).map(|(r, v)| r - v).collect(),
                None => r.clone(),
            };
            if opt == PolicyOptimizer::ActorCritic {
                actor_critic_loss(g, lp, &adv, value, r, rl.beta)
            } else {
                let p = ppo_loss(g, lp, &old_lp[0], &adv, rl.ppo_eps);
                match value {
                    Some(v) if rl.beta > 0.0 => {
                        let vl = value_loss(g, v, r, rl.beta);
                        g.add(p, vl)
                    }
                    _ => p,
                }
            }
        }
    };
    Ok((loss, mean_reward, mean_iou))
}

/// Where a step gets its encoded frames from.
pub enum Source<'a> {
    Bank(&'a super::FeatureBank),
    Live(&'a [crate::synthworld::Sequence]),
}

fn make_input(model: &Model, g: &mut Graph, binder: &mut Binder, src: &Source, tcfg: &TrainConfig, len: usize, rng: &mut impl Rng) -> Result<HeadInput> {
    match src {
        Source::Bank(bank) => Ok(bank.draw(g, tcfg.batch, rng)),
        Source::Live(data) => {
            let batch = super::draw_batch(data, model, tcfg, len, rng)?;
            HeadInput::encode(model, g, binder, &batch)
        }
    }
}

/// One policy update. The regression loss joins in when the regression head
/// is trained alongside (joint training or an unfrozen head).
#[allow(clippy::too_many_arguments)]
pub fn rl_step(
    model: &mut Model,
    opt: &mut AdamW,
    src: &Source,
    tcfg: &TrainConfig,
    rl: &RlConfig,
    old: Option<&mut OldPolicy>,
    lr: f64,
    rng: &mut impl Rng,
) -> Result<StepStats> {
    let mut g = Graph::new();
    let (cells, grid) = (model.cfg.search_tokens(), model.cfg.search_grid());
    let (loss, mean_reward, mean_iou, skipped) = {
        let mut binder = Binder::new(&model.params);
        let input = make_input(model, &mut g, &mut binder, src, tcfg, rl.clip_len, rng)?;
        let (mut loss, r, u) = rl_loss(model, &mut g, &mut binder, &input, rl, old.as_deref(), rng)?;
        let mut skipped = 0;
        if tcfg.no_warmup || tcfg.unfreeze_regression {
            let (reg, _, s) = warmup_loss(&mut g, &input, cells, grid, tcfg)?;
            skipped = s;
            if let Some(reg) = reg {
                loss = g.add(loss, reg);
            }
        }
        (loss, r, u, skipped)
    };
    let lv = g.value(loss).item();
    check_finite(lv, "policy")?;
    apply(model, opt, &g, loss, (lr, lr));
    if let Some(old) = old {
        old.after_step(&model.params)?;
    }
    Ok(StepStats {
        loss: lv,
        mean_reward,
        mean_iou,
        skipped,
    })
}

/// Baseline map loss for `variant` plus the greedy `(mean reward, mean IoU)`.
pub fn prior_loss(model: &Model, g: &mut Graph, binder: &mut Binder, input: &HeadInput, variant: Variant, tcfg: &TrainConfig, rl: &RlConfig) -> Result<(Var, f64, f64)> {
    let frames = input.frames();
    let (cells, grid) = (model.cfg.search_tokens(), model.cfg.search_grid());
    let boxes = g.value(input.boxes).clone();
    let gt: Vec<BBox> = (0..input.len).flat_map(|t| input.targets[t].iter().copied()).collect();
    match variant {
        Variant::CenterHeatmap | Variant::IouHeatmap => {
            let logits = model.policy_logits(g, binder, input.features, frames);
            let mut target = Tensor::zeros(frames, cells);
            for f in 0..frames {
                let map = if variant == Variant::CenterHeatmap {
                    gaussian_center_heatmap(&gt[f], grid, grid, tcfg.heatmap_sigma)?
                } else {
                    let cell_boxes: Vec<BBox> = (0..cells).map(|c| box_at(&boxes, f * cells + c)).collect();
                    iou_heatmap(&cell_boxes, &gt[f], grid, grid)?
                };
                target.row_mut(f).copy_from_slice(&map.values);
            }
            let lv = g.value(logits).clone();
            let actions: Vec<usize> = (0..frames).map(|f| argmax(lv.row(f))).collect();
            let (r, u) = greedy_stats(input, &boxes, &actions, rl, cells)?;
            Ok((quality_focal_loss(g, logits, &target), r, u))
        }
        Variant::CornerPrior => {
            let (tl, br) = model.corner_logits(g, binder, input.features, frames)?;
            let (tv, bv) = (g.value(tl).clone(), g.value(br).clone());
            let sel = (0..frames)
                .map(|f| corner_expectation_decode(&policy_distribution(tv.row(f))?, &policy_distribution(bv.row(f))?, grid, grid))
                .collect::<Result<Vec<_>>>()?;
            let (r, u) = clip_stats(input, &sel, rl)?;
            Ok((corner_l1_loss(g, tl, br, grid, &gt), r, u))
        }
        Variant::Relo => Err(Error::Config("the reward-driven variant has no prior loss".into())),
    }
}

/// One update of a prior-driven baseline.
pub fn prior_step(model: &mut Model, opt: &mut AdamW, src: &Source, tcfg: &TrainConfig, rl: &RlConfig, lr: f64, rng: &mut impl Rng) -> Result<StepStats> {
    let mut g = Graph::new();
    let (cells, grid) = (model.cfg.search_tokens(), model.cfg.search_grid());
    let (loss, r, u, skipped) = {
        let mut binder = Binder::new(&model.params);
        let input = make_input(model, &mut g, &mut binder, src, tcfg, rl.clip_len, rng)?;
        let (mut loss, r, u) = prior_loss(model, &mut g, &mut binder, &input, tcfg.variant, tcfg, rl)?;
        let mut skipped = 0;
        if tcfg.unfreeze_regression {
            let (reg, _, s) = warmup_loss(&mut g, &input, cells, grid, tcfg)?;
            skipped = s;
            if let Some(reg) = reg {
                loss = g.add(loss, reg);
            }
        }
        (loss, r, u, skipped)
    };
    let lv = g.value(loss).item();
    check_finite(lv, "baseline")?;
    apply(model, opt, &g, loss, (lr, lr));
    Ok(StepStats {
        loss: lv,
        mean_reward: r,
        mean_iou: u,
        skipped,
    })
}
