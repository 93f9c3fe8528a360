//! Regression warmup at the reduced budget (a couple of minutes on one core).
//!
//!     cargo run --release --example warmup [-- <out-dir>]
//!
//! Writes `log.csv` and `checkpoint/` and reports the box quality at the
//! ground-truth cell on the val split. `train_policy` picks the checkpoint up.

use std::path::PathBuf;
use std::time::Instant;

use rewardloc::config::Config;
use rewardloc::model::Model;
use rewardloc::synthworld::{make_split, SplitSpec};
use rewardloc::train::{gt_cell_iou, run_warmup};

fn main() -> rewardloc::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("rewardloc-warmup"));
    let cfg = Config::quick();
    let split = SplitSpec::default();
    let train = make_split(&split, "train")?;
    let val = make_split(&split, "val")?;

    let t0 = Instant::now();
    let mut model = Model::new(cfg.model.clone())?;
    let report = run_warmup(&mut model, &train, &cfg.train, Some(&out))?;
    println!("{} epochs in {:.0}s, {} frames skipped", report.epochs.len(), t0.elapsed().as_secs_f64(), report.skipped_frames);
    let v = gt_cell_iou(&model, &val, &cfg.train, 200, 1)?;
    println!("val IoU at the ground-truth cell: {v:.3}");
    println!("checkpoint in {}", out.join("checkpoint").display());
    Ok(())
}
