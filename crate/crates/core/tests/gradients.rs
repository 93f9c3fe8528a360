mod common;

use common::fixture;

fn assert_close(name: &str, r: rewardloc::model::gradcheck::GradCheckReport) {
    println!("{name}: {r:?}");
    assert!(r.checked >= 100, "{name}: only {} coordinates checked", r.checked);
    assert!(r.max_abs_grad > 1e-6, "{name}: all checked gradients vanish");
    assert!(r.max_rel_error < 1e-4, "{name}: {r:?}");
}

#[test]
fn warmup_loss_gradients() {
    assert_close("warmup", fixture(1).check_warmup(200));
}

#[test]
fn actor_critic_gradients() {
    assert_close("actor-critic", fixture(2).check_actor_critic(200, 2));
}

#[test]
fn ppo_gradients() {
    assert_close("ppo", fixture(3).check_ppo(200, 3));
}

#[test]
fn grpo_gradients() {
    assert_close("grpo", fixture(4).check_grpo(200, 4));
}
