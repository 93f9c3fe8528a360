//! A few ablation rows on a tiny model and world, small enough to finish in
//! seconds. The table has the same layout `rewardloc ablate` writes.

use rewardloc::cli::{run_ablation, Ablation, AblationTable};
use rewardloc::config::Config;
use rewardloc::model::{Model, ModelConfig};
use rewardloc::synthworld::make_split;
use rewardloc::train::run_warmup;

fn main() -> rewardloc::Result<()> {
    let mut cfg = Config::default();
    cfg.model = ModelConfig::tiny();
    cfg.split.train = 6;
    cfg.split.shifted_test = 4;
    cfg.split.base.length = 16;
    cfg.train.warmup_epochs = 3;
    cfg.train.warmup_clips = 32;
    cfg.train.rl_epochs = 3;
    cfg.train.rl_clips = 32;
    cfg.train.bank_clips = 32;
    cfg.train.checkpoint_every = 0;
    let train = make_split(&cfg.split, "train")?;
    let eval = make_split(&cfg.split, "shifted_test")?;

    let mut warm = Model::new(cfg.model.clone())?;
    run_warmup(&mut warm, &train, &cfg.train, None)?;
    let shared = |_: &Config| -> rewardloc::Result<Model> { Ok(warm.clone()) };
    let dir = std::env::temp_dir().join("rewardloc-ablation");
    let mut table = AblationTable { split: "shifted_test".into(), rows: Vec::new() };
    for ab in [Ablation::Baseline, Ablation::CenterHeatmap, Ablation::NoAucReward, Ablation::Ppo] {
        table.rows.push(run_ablation(ab, &cfg, &shared, &train, &eval, &dir.join(ab.name()))?);
    }
    print!("{}", table.to_text());
    Ok(())
}
