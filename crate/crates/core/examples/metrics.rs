//! Success curve, AUC, precision and normalized precision for two toy
//! trackers on one synthetic sequence, plus the SVG success plot.
//!
//!     cargo run --release --example metrics [-- <plot.svg>]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rewardloc::geometry::BBox;
use rewardloc::metrics::{aggregate, evaluate_sequence};
use rewardloc::plot::success_svg;
use rewardloc::synthworld::{generate_sequence, WorldSpec};

fn jittered(gt: &[BBox], amount: f64, seed: u64) -> Vec<BBox> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    gt.iter()
        .map(|b| {
            let s = b.area().sqrt() * amount;
            let (dx, dy) = (rng.gen_range(-s..=s), rng.gen_range(-s..=s));
            BBox::new(b.x1 + dx, b.y1 + dy, b.x2 + dx, b.y2 + dy)
        })
        .collect()
}

fn main() -> rewardloc::Result<()> {
    let seq = generate_sequence(&WorldSpec::default(), "demo")?;
    let mut reports = Vec::new();
    for (name, amount) in [("tight", 0.15), ("loose", 0.6)] {
        let pred = jittered(&seq.gt, amount, 1);
        let (score, skipped) = evaluate_sequence(&seq.name, &pred, &seq.gt, &seq.absent)?;
        let report = aggregate(vec![score], skipped)?;
        println!(
            "{name:<6} AUC {:.3}  P {:.3}  P_norm {:.3}  AO {:.3}  SR.5 {:.3}",
            report.auc, report.precision, report.norm_precision, report.ao, report.sr_05
        );
        reports.push((name, report));
    }
    // a perfect tracker scores 20/21: IoU 1 is not strictly above the last threshold
    let (perfect, _) = evaluate_sequence("gt", &seq.gt, &seq.gt, &seq.absent)?;
    println!("perfect AUC {:.6} (20/21 = {:.6})", perfect.auc, 20.0 / 21.0);

    if let Some(path) = std::env::args().nth(1) {
        let curves: Vec<_> = reports.iter().map(|(n, r)| (*n, &r.success)).collect();
        std::fs::write(&path, success_svg(&curves)).expect("write plot");
        println!("wrote {path}");
    }
    Ok(())
}
