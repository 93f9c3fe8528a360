//! Prints the full default run configuration in the `key=value` format every
//! CLI command accepts through `--config`, then reads a partial override.

use std::path::Path;

use rewardloc::config::Config;
use rewardloc::kv::Kv;

fn main() -> rewardloc::Result<()> {
    print!("{}", Config::default().to_text());
    let partial = Kv::parse("rl.optimizer=grpo\nrl.lambda=0\ntrain.rl_epochs=5\n", Path::new("override.cfg"))?;
    let cfg = Config::from_kv(&partial)?;
    println!("# override: optimizer {}, lambda {}, {} rl epochs", cfg.rl.optimizer.name(), cfg.rl.lambda, cfg.train.rl_epochs);
    Ok(())
}
