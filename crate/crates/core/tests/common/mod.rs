#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rewardloc::autograd::{Graph, Tensor, Var};
use rewardloc::config::Config;
use rewardloc::model::{Binder, Model, ModelConfig, ParamStore};
use rewardloc::model::gradcheck::{gradient_check, GradCheckReport};
use rewardloc::rl::{
    actor_critic_loss, grpo_advantages, grpo_loss, picked_log_probs, policy_distribution, ppo_loss, sample_action,
};
use rewardloc::synthworld::{generate_sequence, Sequence, WorldSpec};
use rewardloc::train::{draw_batch, warmup_loss, Batch, HeadInput, TrainConfig};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Adds uniform noise to every parameter so no head output is identically zero.
pub fn perturb(store: &mut ParamStore, scale: f64, seed: u64) {
    let mut r = rng(seed);
    let ids: Vec<_> = store.iter().map(|(id, _)| id).collect();
    for id in ids {
        for v in store.value_mut(id).data.iter_mut() {
            *v += r.gen_range(-scale..scale);
        }
    }
}

pub fn short_sequences(n: usize, length: usize) -> Vec<Sequence> {
    (0..n)
        .map(|i| {
            let spec = WorldSpec {
                length,
                seed: 100 + i as u64,
                occlusion_prob: 0.0,
                ..WorldSpec::default()
            };
            generate_sequence(&spec, &format!("seq-{i}")).unwrap()
        })
        .collect()
}

/// Tiny model (C=8, L=2, 4x4 search grid) with noisy weights and a small batch.
pub struct Fixture {
    pub model: Model,
    pub batch: Batch,
    pub tcfg: TrainConfig,
}

pub fn fixture(seed: u64) -> Fixture {
    let cfg = ModelConfig {
        init_seed: seed,
        ..ModelConfig::tiny()
    };
    let mut model = Model::new(cfg).unwrap();
    perturb(&mut model.params, 0.3, seed);
    let seqs = short_sequences(2, 12);
    let tcfg = TrainConfig {
        batch: 2,
        ..TrainConfig::default()
    };
    let batch = draw_batch(&seqs, &model, &tcfg, 2, &mut rng(seed)).unwrap();
    Fixture { model, batch, tcfg }
}

impl Fixture {
    pub fn frames(&self) -> usize {
        self.batch.size * self.batch.len
    }

    pub fn cells(&self) -> usize {
        self.model.cfg.search_tokens()
    }

    fn input(&self, g: &mut Graph, b: &mut Binder) -> HeadInput {
        HeadInput::encode(&self.model, g, b, &self.batch).unwrap()
    }

    /// Policy logits at the current weights, one row per frame.
    pub fn logits(&self) -> Tensor {
        let mut g = Graph::new();
        let mut b = Binder::new(&self.model.params);
        let input = self.input(&mut g, &mut b);
        let l = self.model.policy_logits(&mut g, &mut b, input.features, self.frames());
        g.value(l).clone()
    }

    pub fn values(&self) -> Vec<f64> {
        let mut g = Graph::new();
        let mut b = Binder::new(&self.model.params);
        let input = self.input(&mut g, &mut b);
        let v = self.model.value(&mut g, &mut b, input.features, self.frames());
        g.value(v).data.clone()
    }

    fn check<F>(&mut self, coords: usize, mut build: F) -> GradCheckReport
    where
        F: FnMut(&Fixture, &mut Graph, &mut Binder, HeadInput) -> Var,
    {
        let mut store = self.model.params.clone();
        let this = &*self;
        gradient_check(&mut store, 1e-6, coords, 7, |g, s| {
            let mut b = Binder::new(s);
            let input = this.input(g, &mut b);
            Ok(build(this, g, &mut b, input))
        })
        .unwrap()
    }

    pub fn check_warmup(&mut self, coords: usize) -> GradCheckReport {
        let (cells, grid) = (self.cells(), self.model.cfg.search_grid());
        self.check(coords, |f, g, _, input| {
            warmup_loss(g, &input, cells, grid, &f.tcfg).unwrap().0.expect("a frame in the window")
        })
    }

    /// Actions from the current policy, random rewards and advantages fixed
    /// at the current value estimates.
    pub fn check_actor_critic(&mut self, coords: usize, seed: u64) -> GradCheckReport {
        let mut r = rng(seed);
        let logits = self.logits();
        let actions: Vec<usize> = (0..self.frames())
            .map(|f| sample_action(&policy_distribution(logits.row(f)).unwrap(), &mut r).0)
            .collect();
        let rewards: Vec<f64> = (0..self.frames()).map(|_| r.gen_range(0.0..2.0)).collect();
        let adv: Vec<f64> = rewards.iter().zip(self.values()).map(|(r, v)| r - v).collect();
        let frames = self.frames();
        self.check(coords, |f, g, b, input| {
            let l = f.model.policy_logits(g, b, input.features, frames);
            let lp = picked_log_probs(g, l, &actions);
            let v = f.model.value(g, b, input.features, frames);
            actor_critic_loss(g, lp, &adv, Some(v), &rewards, 0.5)
        })
    }

    /// Behaviour log-probs offset from the current ones so some ratios fall
    /// outside the clip range.
    pub fn check_ppo(&mut self, coords: usize, seed: u64) -> GradCheckReport {
        let mut r = rng(seed);
        let logits = self.logits();
        let mut actions = Vec::new();
        let mut old = Vec::new();
        for f in 0..self.frames() {
            let (a, lp) = sample_action(&policy_distribution(logits.row(f)).unwrap(), &mut r);
            actions.push(a);
            old.push(lp + r.gen_range(-0.5..0.5));
        }
        let adv: Vec<f64> = (0..self.frames()).map(|_| r.gen_range(-1.0..1.0)).collect();
        let frames = self.frames();
        self.check(coords, |f, g, b, input| {
            let l = f.model.policy_logits(g, b, input.features, frames);
            let lp = picked_log_probs(g, l, &actions);
            ppo_loss(g, lp, &old, &adv, 0.2)
        })
    }

    /// G=8 samples per frame with group-normalized advantages per clip.
    pub fn check_grpo(&mut self, coords: usize, seed: u64) -> GradCheckReport {
        let mut r = rng(seed);
        let group = 8;
        let (frames, clips, len) = (self.frames(), self.batch.size, self.batch.len);
        let logits = self.logits();
        let mut pairs = Vec::new();
        let mut old = Vec::new();
        for _ in 0..group {
            for f in 0..frames {
                let (a, lp) = sample_action(&policy_distribution(logits.row(f)).unwrap(), &mut r);
                pairs.push((f, a));
                old.push(lp + r.gen_range(-0.3..0.3));
            }
        }
        let mut adv = vec![0.0; group * frames];
        for b in 0..clips {
            let rewards: Vec<Vec<f64>> = (0..group).map(|_| (0..len).map(|_| r.gen_range(0.0..2.0)).collect()).collect();
            let a = grpo_advantages(&rewards, 1e-6).unwrap();
            for k in 0..group {
                for t in 0..len {
                    adv[k * frames + t * clips + b] = a[k][t];
                }
            }
        }
        self.check(coords, |f, g, b, input| {
            let l = f.model.policy_logits(g, b, input.features, frames);
            let ls = g.log_softmax_rows(l);
            let lp = g.pick(ls, &pairs);
            grpo_loss(g, lp, &old, &adv, 0.2)
        })
    }
}

/// Small enough for the CLI to run every stage in well under a second.
pub fn tiny_config() -> Config {
    let mut c = Config::default();
    c.model = ModelConfig::tiny();
    c.split.train = 4;
    c.split.val = 3;
    c.split.shifted_test = 3;
    c.split.base.length = 10;
    c.train.warmup_epochs = 2;
    c.train.warmup_clips = 8;
    c.train.rl_epochs = 2;
    c.train.rl_clips = 8;
    c.train.batch = 4;
    c.train.bank_clips = 8;
    c.train.checkpoint_every = 1;
    c
}
