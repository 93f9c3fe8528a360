//! Reward-driven training of the localization policy on top of a warmup
//! checkpoint, compared with picking cells uniformly at random.
//!
//!     cargo run --release --example train_policy [-- <warmup-dir> [actor-critic|ppo|grpo]]
//!
//! Without a checkpoint the warmup runs first.

use std::path::PathBuf;

use rewardloc::cli::resolve_checkpoint;
use rewardloc::config::Config;
use rewardloc::model::{load_checkpoint, Model};
use rewardloc::rl::PolicyOptimizer;
use rewardloc::synthworld::{make_split, SplitSpec};
use rewardloc::tracker::{evaluate_model, mean_tracking_iou, Localizer};
use rewardloc::train::{run_rl, run_warmup};

fn main() -> rewardloc::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args: Vec<String> = std::env::args().collect();
    let warm_dir = args
        .get(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("rewardloc-warmup"));
    let mut cfg = Config::quick();
    if let Some(o) = args.get(2) {
        cfg.rl.optimizer = PolicyOptimizer::parse(o)?;
    }
    let split = SplitSpec::default();
    let train = make_split(&split, "train")?;
    let val = make_split(&split, "val")?;

    let warm = match resolve_checkpoint(&warm_dir) {
        Ok(dir) => load_checkpoint(&dir)?,
        Err(_) => {
            println!("no checkpoint under {}, running the warmup first", warm_dir.display());
            let mut m = Model::new(cfg.model.clone())?;
            run_warmup(&mut m, &train, &cfg.train, Some(&warm_dir))?;
            m
        }
    };
    let (res, _) = evaluate_model(&warm, &val, Localizer::Random { seed: 0 })?;
    let random = mean_tracking_iou(&res, &val)?;

    let mut model = warm.clone();
    let log = run_rl(&mut model, &train, &cfg.train, &cfg.rl, None)?;
    print!("{}", log.to_csv());
    let (res, report) = evaluate_model(&model, &val, Localizer::Policy)?;
    let policy = mean_tracking_iou(&res, &val)?;
    println!(
        "{}: val tracking IoU {policy:.3} (random cells {random:.3}), AUC {:.3}",
        cfg.rl.optimizer.name(),
        report.auc
    );
    Ok(())
}
