//! Localization as a one-step-per-frame decision process over the search grid:
//! categorical policies, overlap rewards, advantages and the actor-critic,
//! PPO and GRPO objectives.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::Rng;

use crate::autograd::{log_sum_exp, Graph, ParamId, Tensor, Var};
use crate::error::{Error, Result};
use crate::geometry::{iou, BBox};
use crate::kv::Kv;
use crate::metrics;
use crate::model::{ParamStore, POLICY_PREFIX};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PolicyOptimizer {
    ActorCritic,
    Ppo,
    Grpo,
}

impl PolicyOptimizer {
    pub fn name(self) -> &'static str {
        match self {
            PolicyOptimizer::ActorCritic => "actor-critic",
            PolicyOptimizer::Ppo => "ppo",
            PolicyOptimizer::Grpo => "grpo",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "actor-critic" => Ok(PolicyOptimizer::ActorCritic),
            "ppo" => Ok(PolicyOptimizer::Ppo),
            "grpo" => Ok(PolicyOptimizer::Grpo),
            _ => Err(Error::Config(format!("unknown optimizer {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RlConfig {
    /// Weight of the clip-level AUC reward.
    pub lambda: f64,
    /// Weight of the per-frame IoU reward.
    pub iou_weight: f64,
    /// Value-loss weight.
    pub beta: f64,
    pub clip_len: usize,
    pub optimizer: PolicyOptimizer,
    pub ppo_eps: f64,
    pub group_size: usize,
    pub refresh_period: usize,
    pub grpo_eps: f64,
    /// Subtract the value estimate from the reward. Without it the raw reward
    /// weights the log-probabilities.
    pub use_value: bool,
}

impl Default for RlConfig {
    fn default() -> Self {
        RlConfig {
            lambda: 1.0,
            iou_weight: 1.0,
            beta: 0.5,
            clip_len: 8,
            optimizer: PolicyOptimizer::ActorCritic,
            ppo_eps: 0.2,
            group_size: 8,
            refresh_period: 4,
            grpo_eps: 1e-6,
            use_value: true,
        }
    }
}

impl RlConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.lambda < 0.0 || self.beta < 0.0 || self.iou_weight < 0.0 {
            return bad("reward and loss weights must be non-negative");
        }
        if self.clip_len == 0 {
            return bad("clip length must be at least 1");
        }
        if !(self.ppo_eps > 0.0 && self.ppo_eps < 1.0) {
            return bad("ppo epsilon must lie in (0, 1)");
        }
        if self.group_size < 2 {
            return bad("group size must be at least 2");
        }
        if self.refresh_period == 0 {
            return bad("refresh period must be positive");
        }
        if self.grpo_eps < 0.0 {
            return bad("grpo epsilon must be non-negative");
        }
        Ok(())
    }

    pub fn write_kv(&self, kv: &mut Kv, prefix: &str) {
        kv.set(&format!("{prefix}lambda"), self.lambda);
        kv.set(&format!("{prefix}iou_weight"), self.iou_weight);
        kv.set(&format!("{prefix}beta"), self.beta);
        kv.set(&format!("{prefix}clip_len"), self.clip_len);
        kv.set(&format!("{prefix}optimizer"), self.optimizer.name());
        kv.set(&format!("{prefix}ppo_eps"), self.ppo_eps);
        kv.set(&format!("{prefix}group_size"), self.group_size);
        kv.set(&format!("{prefix}refresh_period"), self.refresh_period);
        kv.set(&format!("{prefix}grpo_eps"), self.grpo_eps);
        kv.set(&format!("{prefix}use_value"), self.use_value);
    }

    pub fn read_kv(kv: &Kv, prefix: &str) -> Result<Self> {
        let d = RlConfig::default();
        let k = |n: &str| format!("{prefix}{n}");
        let c = RlConfig {
            lambda: kv.get_or(&k("lambda"), d.lambda)?,
            iou_weight: kv.get_or(&k("iou_weight"), d.iou_weight)?,
            beta: kv.get_or(&k("beta"), d.beta)?,
            clip_len: kv.get_or(&k("clip_len"), d.clip_len)?,
            optimizer: PolicyOptimizer::parse(kv.get_str(&k("optimizer")).unwrap_or(d.optimizer.name()))?,
            ppo_eps: kv.get_or(&k("ppo_eps"), d.ppo_eps)?,
            group_size: kv.get_or(&k("group_size"), d.group_size)?,
            refresh_period: kv.get_or(&k("refresh_period"), d.refresh_period)?,
            grpo_eps: kv.get_or(&k("grpo_eps"), d.grpo_eps)?,
            use_value: kv.get_or(&k("use_value"), d.use_value)?,
        };
        c.validate()?;
        Ok(c)
    }
}

/// Softmax over all cells of a logit map.
pub fn policy_distribution(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::invalid("empty logit map"));
    }
    if let Some(v) = logits.iter().find(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("non-finite logit {v}")));
    }
    let lse = log_sum_exp(logits);
    Ok(logits.iter().map(|l| (l - lse).exp()).collect())
}

/// Inverse-CDF draw. Returns the action and the log of its probability.
pub fn sample_action(probs: &[f64], rng: &mut impl Rng) -> (usize, f64) {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        last = i;
        acc += p;
        if u < acc {
            return (i, p.ln());
        }
    }
    (last, probs[last].ln())
}

/// Smallest index of the largest entry.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

/// `r_t = IoU_t + lambda * AUC(clip)`, the AUC term shared by every frame.
pub fn clip_rewards(selected: &[BBox], gt: &[BBox], lambda: f64) -> Result<Vec<f64>> {
    clip_rewards_weighted(selected, gt, 1.0, lambda)
}

/// As [`clip_rewards`] with an explicit weight on the per-frame IoU term.
pub fn clip_rewards_weighted(selected: &[BBox], gt: &[BBox], iou_weight: f64, lambda: f64) -> Result<Vec<f64>> {
    if selected.len() != gt.len() || selected.is_empty() {
        return Err(Error::Shape(format!(
            "{} selected boxes for {} ground-truth boxes",
            selected.len(),
            gt.len()
        )));
    }
    let ious: Vec<f64> = selected
        .iter()
        .zip(gt)
        .map(|(a, b)| iou(a, b))
        .collect::<Result<_>>()?;
    let shared = lambda * metrics::auc(&ious)?;
    Ok(ious.iter().map(|&u| iou_weight * u + shared).collect())
}

pub fn advantage(rewards: &[f64], values: &[f64]) -> Vec<f64> {
    rewards.iter().zip(values).map(|(r, v)| r - v).collect()
}

/// Per-frame group normalization of a `G x T` reward matrix with the
/// population standard deviation.
pub fn grpo_advantages(rewards: &[Vec<f64>], eps: f64) -> Result<Vec<Vec<f64>>> {
    let g = rewards.len();
    if g < 2 {
        return Err(Error::invalid("group needs at least two trajectories"));
    }
    let t = rewards[0].len();
    if rewards.iter().any(|r| r.len() != t) {
        return Err(Error::Shape("ragged reward group".into()));
    }
    let mut out = vec![vec![0.0; t]; g];
    for f in 0..t {
        let mean = rewards.iter().map(|r| r[f]).sum::<f64>() / g as f64;
        let var = rewards.iter().map(|r| (r[f] - mean).powi(2)).sum::<f64>() / g as f64;
        let std = var.sqrt();
        // identical rewards carry no signal; rounding in the mean must not invent one
        let tied = rewards.iter().all(|r| r[f] == rewards[0][f]);
        for k in 0..g {
            let d = rewards[k][f] - mean;
            out[k][f] = if tied { 0.0 } else { d / (std + eps) };
        }
    }
    Ok(out)
}

/// Log-probabilities of the chosen actions, `[batch, 1]`, from logits
/// `[batch, cells]`.
pub fn picked_log_probs(g: &mut Graph, logits: Var, actions: &[usize]) -> Var {
    let ls = g.log_softmax_rows(logits);
    let idx: Vec<(usize, usize)> = actions.iter().enumerate().map(|(r, &a)| (r, a)).collect();
    g.pick(ls, &idx)
}

fn column(g: &mut Graph, xs: &[f64]) -> Var {
    g.constant(Tensor::from_vec(xs.len(), 1, xs.to_vec()))
}

/// `-mean(A * log pi)`; the advantages are constants.
pub fn policy_loss(g: &mut Graph, log_probs: Var, adv: &[f64]) -> Var {
    let a = column(g, adv);
    let w = g.mul(log_probs, a);
    let m = g.mean(w);
    g.scale(m, -1.0)
}

/// `beta * mean((v - r)^2)`.
pub fn value_loss(g: &mut Graph, values: Var, rewards: &[f64], beta: f64) -> Var {
    let r = column(g, rewards);
    let d = g.sub(values, r);
    let sq = g.square(d);
    let m = g.mean(sq);
    g.scale(m, beta)
}

/// Actor-critic objective. Without `values` only the policy term remains.
pub fn actor_critic_loss(g: &mut Graph, log_probs: Var, adv: &[f64], values: Option<Var>, rewards: &[f64], beta: f64) -> Var {
    let p = policy_loss(g, log_probs, adv);
    match values {
        Some(v) if beta > 0.0 => {
            let vl = value_loss(g, v, rewards, beta);
            g.add(p, vl)
        }
        _ => p,
    }
}

/// Clipped surrogate `-mean(min(rho A, clip(rho, 1-eps, 1+eps) A))`.
pub fn ppo_loss(g: &mut Graph, log_probs: Var, old_log_probs: &[f64], adv: &[f64], eps: f64) -> Var {
    let old = column(g, old_log_probs);
    let d = g.sub(log_probs, old);
    let ratio = g.exp(d);
    let a = column(g, adv);
    let s1 = g.mul(ratio, a);
    let clipped = g.clamp(ratio, 1.0 - eps, 1.0 + eps);
    let s2 = g.mul(clipped, a);
    let m = g.minimum(s1, s2);
    let mean = g.mean(m);
    g.scale(mean, -1.0)
}

/// GRPO objective: the clipped surrogate averaged over all `G x T` entries of
/// a trajectory group (flattened row-major by trajectory).
pub fn grpo_loss(g: &mut Graph, log_probs: Var, old_log_probs: &[f64], adv: &[f64], eps: f64) -> Var {
    ppo_loss(g, log_probs, old_log_probs, adv, eps)
}

/// Closed-form gradient of `-(1/T) A log pi(a)` with respect to the logits.
pub fn policy_logit_gradient(probs: &[f64], action: usize, adv: f64, t: usize) -> Vec<f64> {
    probs
        .iter()
        .enumerate()
        .map(|(i, &p)| (p - if i == action { 1.0 } else { 0.0 }) * adv / t as f64)
        .collect()
}

/// Frozen copy of the policy-head parameters that defines the behaviour
/// policy for PPO and GRPO.
#[derive(Clone, Debug)]
pub struct OldPolicy {
    optimizer: PolicyOptimizer,
    period: usize,
    steps: usize,
    snapshot: HashMap<ParamId, Tensor>,
}

impl OldPolicy {
    pub fn new(optimizer: PolicyOptimizer, period: usize, store: &ParamStore) -> Result<Self> {
        let mut s = OldPolicy {
            optimizer,
            period,
            steps: 0,
            snapshot: HashMap::new(),
        };
        s.refresh(store)?;
        Ok(s)
    }

    /// Copies the current policy head.
    pub fn refresh(&mut self, store: &ParamStore) -> Result<()> {
        if self.optimizer == PolicyOptimizer::ActorCritic {
            return Err(Error::Config("actor-critic keeps no old policy".into()));
        }
        self.snapshot = store.snapshot(POLICY_PREFIX);
        self.steps = 0;
        Ok(())
    }

    /// Counts one optimization step and refreshes once `period` steps have
    /// passed since the last snapshot.
    pub fn after_step(&mut self, store: &ParamStore) -> Result<bool> {
        self.steps += 1;
        if self.steps >= self.period {
            self.refresh(store)?;
            return Ok(true);
        }
        Ok(false)
    }

    pub fn params(&self) -> &HashMap<ParamId, Tensor> {
        &self.snapshot
    }
}

/// Per-frame record of one sampled clip.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub actions: Vec<usize>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub advantages: Vec<f64>,
    pub boxes: Vec<BBox>,
    pub ious: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// One line per frame: `frame action reward value advantage`.
    pub fn to_text(&self, grid_w: usize) -> String {
        let mut s = String::from("# frame row col reward value advantage log_prob\n");
        for t in 0..self.len() {
            let a = self.actions[t];
            let _ = writeln!(
                s,
                "{} {} {} {:.6} {:.6} {:.6} {:.6}",
                t + 1,
                a / grid_w,
                a % grid_w,
                self.rewards[t],
                self.values.get(t).copied().unwrap_or(0.0),
                self.advantages[t],
                self.log_probs[t]
            );
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn distribution_examples() {
        let p = policy_distribution(&[0.3; 64]).unwrap();
        assert!(p.iter().all(|&v| (v - 1.0 / 64.0).abs() < 1e-15));
        let l: Vec<f64> = (0..64).map(|i| (i as f64 * 0.37).sin()).collect();
        let shifted: Vec<f64> = l.iter().map(|v| v + 11.0).collect();
        let (a, b) = (policy_distribution(&l).unwrap(), policy_distribution(&shifted).unwrap());
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let mut peaked = vec![0.0; 64];
        peaked[5] = 20.0;
        assert!(policy_distribution(&peaked).unwrap()[5] > 0.999);
        assert!(policy_distribution(&[0.0, f64::NAN]).is_err());
    }

    #[test]
    fn one_hot_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = vec![0.0; 10];
        p[3] = 1.0;
        for _ in 0..20 {
            assert_eq!(sample_action(&p, &mut rng), (3, 0.0));
        }
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let p = policy_distribution(&[0.1, 0.5, -0.3, 1.0]).unwrap();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50).map(|_| sample_action(&p, &mut rng).0).collect::<Vec<_>>()
        };
        assert_eq!(draw(7), draw(7));
    }

    #[test]
    fn reward_examples() {
        let gt = BBox::new(0.0, 0.0, 1.0, 1.0);
        let perfect = clip_rewards(&[gt, gt, gt], &[gt, gt, gt], 1.0).unwrap();
        assert!(perfect.iter().all(|&r| r == 1.0 + 20.0 / 21.0));
        let b = BBox::new(0.0, 0.0, 0.5, 1.0);
        let r = clip_rewards(&[b, gt], &[gt, gt], 0.0).unwrap();
        assert_eq!(r, vec![0.5, 1.0]);
        assert!(clip_rewards(&[b], &[gt, gt], 1.0).is_err());
    }

    #[test]
    fn actor_critic_worked_example() {
        // T = 1, A = 2, log pi = -1, v - r = -2, beta = 0.5
        let mut g = Graph::new();
        let lp = g.constant(Tensor::scalar(-1.0));
        let v = g.constant(Tensor::scalar(0.5));
        let l = actor_critic_loss(&mut g, lp, &[2.0], Some(v), &[2.5], 0.5);
        assert!((g.value(l).item() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn ppo_clipping_examples() {
        let term = |rho: f64, a: f64| {
            let mut g = Graph::new();
            let lp = g.constant(Tensor::scalar(rho.ln()));
            let l = ppo_loss(&mut g, lp, &[0.0], &[a], 0.2);
            -g.value(l).item()
        };
        assert!((term(2.0, 1.0) - 1.2).abs() < 1e-12);
        assert!((term(0.5, -1.0) + 0.8).abs() < 1e-12);
    }

    #[test]
    fn grpo_examples() {
        let a = grpo_advantages(&[vec![0.0], vec![1.0]], 0.0).unwrap();
        assert_eq!(a, vec![vec![-1.0], vec![1.0]]);
        let z = grpo_advantages(&[vec![0.7, 0.2], vec![0.7, 0.2], vec![0.7, 0.2]], 1e-6).unwrap();
        assert!(z.iter().flatten().all(|&v| v == 0.0));
        assert!(grpo_advantages(&[vec![1.0]], 0.0).is_err());
    }

    #[test]
    fn old_policy_requires_a_clipped_optimizer() {
        let store = ParamStore::new();
        assert!(OldPolicy::new(PolicyOptimizer::ActorCritic, 4, &store).is_err());
        let mut old = OldPolicy::new(PolicyOptimizer::Ppo, 2, &store).unwrap();
        assert!(!old.after_step(&store).unwrap());
        assert!(old.after_step(&store).unwrap());
    }

    #[test]
    fn config_round_trip() {
        let c = RlConfig {
            optimizer: PolicyOptimizer::Grpo,
            lambda: 0.0,
            ..RlConfig::default()
        };
        let mut kv = Kv::new();
        c.write_kv(&mut kv, "rl.");
        assert_eq!(RlConfig::read_kv(&kv, "rl.").unwrap(), c);
    }

    #[test]
    fn trajectory_dump_has_one_line_per_frame() {
        let t = Trajectory {
            actions: vec![0, 9],
            log_probs: vec![-1.0, -2.0],
            rewards: vec![1.0, 0.5],
            values: vec![0.2, 0.1],
            advantages: vec![0.8, 0.4],
            ..Trajectory::default()
        };
        let s = t.to_text(8);
        assert_eq!(s.lines().count(), 3);
        assert!(s.lines().nth(2).unwrap().starts_with("2 1 1 "));
    }
}
