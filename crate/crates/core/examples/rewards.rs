//! Reward and advantage arithmetic: per-frame IoU plus the clip-level AUC
//! term, value baselines, group-relative advantages and the PPO ratio.

use rewardloc::autograd::{Graph, Tensor};
use rewardloc::geometry::BBox;
use rewardloc::rl::{advantage, clip_rewards, grpo_advantages, picked_log_probs, ppo_loss};

fn main() -> rewardloc::Result<()> {
    let gt = BBox::new(0.0, 0.0, 10.0, 10.0);
    let picks = [BBox::new(0.0, 0.0, 10.0, 5.0), BBox::new(0.0, 0.0, 10.0, 7.0)];
    for lambda in [0.0, 1.0] {
        let r = clip_rewards(&picks, &[gt, gt], lambda)?;
        println!("lambda={lambda}: rewards {r:?}");
    }
    println!("(IoUs 0.5 and 0.7; their AUC over the 21-point grid is 4/7 = {:.6})", 4.0 / 7.0);

    let r = clip_rewards(&picks, &[gt, gt], 1.0)?;
    let values = [0.9, 1.4];
    println!("advantages with value estimates {values:?}: {:?}", advantage(&r, &values));

    let group = vec![vec![1.2, 0.4], vec![0.8, 0.6], vec![1.0, 0.5], vec![1.0, 0.5]];
    for (k, a) in grpo_advantages(&group, 1e-6)?.iter().enumerate() {
        println!("group member {k}: rewards {:?} -> advantages {a:.3?}", group[k]);
    }

    // With the behaviour policy equal to the current one, the PPO surrogate
    // reduces to the plain policy gradient: the loss equals -mean(A).
    let logits = Tensor::from_vec(2, 4, vec![0.1, 0.5, -0.3, 0.0, 1.0, 0.2, 0.2, -1.0]);
    let actions = [1, 0];
    let adv = [0.7, -0.2];
    let mut g = Graph::new();
    let l = g.constant(logits);
    let lp = picked_log_probs(&mut g, l, &actions);
    let old = g.value(lp).data.clone();
    let loss = ppo_loss(&mut g, lp, &old, &adv, 0.2);
    println!("PPO loss at ratio 1: {:.4} (-mean A = {:.4})", g.value(loss).item(), -(adv[0] + adv[1]) / 2.0);
    Ok(())
}
