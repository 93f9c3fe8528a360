//! The handcrafted targets behind the prior-driven baselines, and optionally
//! one baseline trained against the reward-driven policy.
//!
//!     cargo run --release --example prior_baselines [-- <warmup-dir> [center-heatmap|iou-heatmap|corner-prior]]

use std::path::PathBuf;

use rewardloc::cli::{localizer_for, resolve_checkpoint, second_stage_model, train_stage};
use rewardloc::config::Config;
use rewardloc::geometry::BBox;
use rewardloc::model::load_checkpoint;
use rewardloc::priors::{corner_expectation_decode, gaussian_center_heatmap, iou_heatmap, Heatmap};
use rewardloc::synthworld::{make_split, SplitSpec};
use rewardloc::tracker::evaluate_model;
use rewardloc::train::Variant;

fn show(name: &str, m: &Heatmap) {
    println!("{name}");
    for i in 0..m.h {
        let row: Vec<String> = (0..m.w).map(|j| format!("{:.2}", m.get(i, j))).collect();
        println!("  {}", row.join(" "));
    }
}

fn main() -> rewardloc::Result<()> {
    let (h, w) = (8, 8);
    let gt = BBox::from_center(0.4, 0.55, 0.3, 0.25);
    show("center gaussian (sigma 1 cell)", &gaussian_center_heatmap(&gt, h, w, 1.0)?);
    // boxes of the target's size centered on every cell
    let boxes: Vec<BBox> = (0..h * w)
        .map(|k| BBox::from_center(((k % w) as f64 + 0.5) / w as f64, ((k / w) as f64 + 0.5) / h as f64, 0.3, 0.25))
        .collect();
    show("IoU of each cell's box", &iou_heatmap(&boxes, &gt, h, w)?);
    let mut tl = vec![0.0; h * w];
    let mut br = vec![0.0; h * w];
    tl[2 * w + 1] = 0.5;
    tl[3 * w + 2] = 0.5;
    br[5 * w + 4] = 1.0;
    println!("corner expectation decode: {:?}", corner_expectation_decode(&tl, &br, h, w)?);

    let Some(dir) = std::env::args().nth(1).map(PathBuf::from) else {
        return Ok(());
    };
    let variant = Variant::parse(&std::env::args().nth(2).unwrap_or_else(|| "center-heatmap".into()))?;
    let warm = load_checkpoint(&resolve_checkpoint(&dir)?)?;
    let split = SplitSpec::default();
    let train = make_split(&split, "train")?;
    let shifted = make_split(&split, "shifted_test")?;
    for v in [variant, Variant::Relo] {
        let mut cfg = Config::quick();
        cfg.train.variant = v;
        let mut model = second_stage_model(&cfg, Some(&warm))?;
        train_stage(&mut model, &train, &cfg, None)?;
        let (_, report) = evaluate_model(&model, &shifted, localizer_for(v))?;
        println!("{:<15} shifted_test AUC {:.3}", v.name(), report.auc);
    }
    Ok(())
}
