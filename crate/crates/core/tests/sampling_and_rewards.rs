mod common;

use rand::Rng;

use rewardloc::geometry::BBox;
use rewardloc::model::{Model, ModelConfig};
use rewardloc::rl::{
    advantage, argmax, clip_rewards, grpo_advantages, policy_distribution, sample_action, OldPolicy, PolicyOptimizer, RlConfig,
};

#[test]
fn sampled_frequencies_match_the_distribution() {
    let probs = policy_distribution(&[0.3, -1.0, 2.0, 0.0, 0.7]).unwrap();
    let n = 100_000;
    let mut counts = vec![0usize; probs.len()];
    let mut r = common::rng(0);
    for _ in 0..n {
        let (a, lp) = sample_action(&probs, &mut r);
        assert!((lp - probs[a].ln()).abs() < 1e-12);
        counts[a] += 1;
    }
    for (k, &p) in probs.iter().enumerate() {
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        let dev = (counts[k] as f64 - n as f64 * p).abs();
        assert!(dev <= 3.0 * sigma, "action {k}: {} draws, expected {:.0} +- {:.0}", counts[k], n as f64 * p, sigma);
    }
}

#[test]
fn distribution_is_shift_invariant_and_rejects_nan() {
    let a = policy_distribution(&[1.0, 2.0, 3.0]).unwrap();
    let b = policy_distribution(&[1001.0, 1002.0, 1003.0]).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-12);
    }
    assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(policy_distribution(&[0.0, f64::NAN]).is_err());
}

#[test]
fn argmax_prefers_the_smallest_index_on_ties() {
    assert_eq!(argmax(&[0.1, 0.4, 0.4, 0.2]), 1);
    assert_eq!(argmax(&[0.25; 4]), 0);
}

#[test]
fn rewards_match_hand_computation() {
    let gt = BBox::new(0.0, 0.0, 10.0, 10.0);
    let perfect = clip_rewards(&[gt, gt, gt], &[gt, gt, gt], 0.5).unwrap();
    // IoU 1 everywhere: AUC is 20/21 because IoU 1 is not above threshold 1
    for r in perfect {
        assert!((r - (1.0 + 0.5 * 20.0 / 21.0)).abs() < 1e-12);
    }
    let miss = BBox::new(50.0, 50.0, 60.0, 60.0);
    assert_eq!(clip_rewards(&[miss], &[gt], 1.0).unwrap(), vec![0.0]);
    assert!(clip_rewards(&[gt], &[gt, gt], 1.0).is_err());
}

#[test]
fn advantage_is_reward_minus_value() {
    assert_eq!(advantage(&[1.0, 0.5], &[0.25, 0.75]), vec![0.75, -0.25]);
}

#[test]
fn grpo_groups_with_identical_rewards_have_zero_advantage() {
    let a = grpo_advantages(&vec![vec![0.3, 1.0]; 8], 1e-6).unwrap();
    assert!(a.iter().flatten().all(|&v| v == 0.0));
    assert!(grpo_advantages(&[vec![1.0]], 1e-6).is_err());
    let mut r = common::rng(3);
    let g: Vec<Vec<f64>> = (0..8).map(|_| vec![r.gen_range(0.0..1.0)]).collect();
    let a = grpo_advantages(&g, 1e-6).unwrap();
    // ranks are preserved
    for i in 0..8 {
        for j in 0..8 {
            if g[i][0] < g[j][0] {
                assert!(a[i][0] < a[j][0]);
            }
        }
    }
}

#[test]
fn old_policy_refreshes_on_its_period() {
    let mut model = Model::new(ModelConfig::tiny()).unwrap();
    let mut old = OldPolicy::new(PolicyOptimizer::Ppo, 2, &model.params).unwrap();
    let id = model.params.id("policy.out.b").unwrap();
    model.params.value_mut(id).data[0] = 1.0;
    assert!(!old.after_step(&model.params).unwrap());
    assert_eq!(old.params()[&id].data[0], 0.0);
    assert!(old.after_step(&model.params).unwrap());
    assert_eq!(old.params()[&id].data[0], 1.0);
    assert!(OldPolicy::new(PolicyOptimizer::ActorCritic, 2, &model.params).is_err());
}

#[test]
fn rl_config_validation() {
    assert!(RlConfig::default().validate().is_ok());
    assert!(RlConfig { clip_len: 0, ..RlConfig::default() }.validate().is_err());
    assert!(RlConfig { group_size: 1, optimizer: PolicyOptimizer::Grpo, ..RlConfig::default() }.validate().is_err());
}
