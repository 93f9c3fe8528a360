//! Renders the three splits and prints what they contain.
//!
//!     cargo run --release --example synthetic_world [-- <out-dir>]
//!
//! With an output directory the splits are written in the on-disk layout the
//! CLI reads (`<split>/<seq>/00000001.png`, `groundtruth.txt`, `list.txt`).

use std::path::PathBuf;

use rewardloc::synthworld::{make_split, write_split, SplitSpec, SPLIT_NAMES};

fn main() -> rewardloc::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from);
    let spec = SplitSpec::default();
    for split in SPLIT_NAMES {
        let seqs = make_split(&spec, split)?;
        let frames: usize = seqs.iter().map(|s| s.len()).sum();
        let absent: usize = seqs.iter().map(|s| s.absent.iter().filter(|&&a| a).count()).sum();
        let sides: Vec<f64> = seqs.iter().flat_map(|s| s.gt.iter().map(|b| b.area().sqrt())).collect();
        let mean_side = sides.iter().sum::<f64>() / sides.len() as f64;
        println!(
            "{split:<13} {:>3} sequences  {frames:>5} frames  {absent:>3} fully occluded  mean target side {mean_side:.1}px",
            seqs.len()
        );
        let first = &seqs[0];
        println!("  {}: first box {:?}, last box {:?}", first.name, first.gt[0], first.gt[first.len() - 1]);
        if let Some(dir) = &out {
            write_split(dir, split, &seqs)?;
        }
    }
    if let Some(dir) = out {
        println!("wrote {}", dir.display());
    }
    Ok(())
}
