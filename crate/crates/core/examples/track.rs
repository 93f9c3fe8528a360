//! Tracks the val split with a checkpoint and writes result files, score-map
//! images and the evaluation report.
//!
//!     cargo run --release --example track -- <checkpoint-or-run-dir> [<out-dir>]
//!
//! Without arguments an untrained model is used, which only shows the plumbing.

use std::path::PathBuf;

use rewardloc::cli::resolve_checkpoint;
use rewardloc::model::{load_checkpoint, Model, ModelConfig};
use rewardloc::synthworld::{make_split, SplitSpec};
use rewardloc::tracker::{evaluate_model, write_results, write_score_maps, Localizer};

fn main() -> rewardloc::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let model = match args.get(1) {
        Some(p) => load_checkpoint(&resolve_checkpoint(&PathBuf::from(p))?)?,
        None => Model::new(ModelConfig::default())?,
    };
    let out = args
        .get(2)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("rewardloc-track"));
    let val = make_split(&SplitSpec::default(), "val")?;
    let (results, report) = evaluate_model(&model, &val, Localizer::Policy)?;
    for r in &results {
        write_results(&out, r)?;
        write_score_maps(&out.join("scoremaps"), r, model.cfg.search_grid())?;
    }
    report.write(&out.join("eval"))?;
    print!("{}", report.to_kv());
    println!("results in {}", out.display());
    Ok(())
}
