//! Temporal tokens across two frames under both routings.
//!
//! Layer-aligned routing stores one token set per layer and feeds it back at
//! the same depth; deep-to-shallow feeds the final-layer tokens to layer 0.

use rewardloc::autograd::{Graph, Tensor};
use rewardloc::geometry::crop_window;
use rewardloc::imaging::crop_resize;
use rewardloc::model::{Binder, Model, ModelConfig, Propagation};
use rewardloc::synthworld::{generate_sequence, WorldSpec};

fn run(model: &Model, template: &Tensor, searches: &[Tensor]) -> rewardloc::Result<Vec<Tensor>> {
    let mut g = Graph::new();
    let mut b = Binder::new(&model.params);
    let z = g.constant(template.clone());
    let mut prev = Vec::new();
    let mut out = Vec::new();
    for (t, x) in searches.iter().enumerate() {
        let x = g.constant(x.clone());
        let enc = model.encode(&mut g, &mut b, z, x, 1, &prev)?;
        let counts: Vec<_> = enc.layer_tokens.iter().map(|l| (l.within_frame, l.total)).collect();
        println!("  frame {t}: (within-frame, total) tokens per layer {counts:?}, {} sets carried", enc.temporal.len());
        prev = enc.temporal;
        out.push(g.value(enc.features).clone());
    }
    Ok(out)
}

fn main() -> rewardloc::Result<()> {
    let seq = generate_sequence(&WorldSpec::default(), "p")?;
    let aligned = Model::new(ModelConfig::default())?;
    let cfg = &aligned.cfg;
    let zc = crop_resize(&seq.frames[0], &crop_window(&seq.gt[0], 2.0, cfg.template_size)?);
    let template = aligned.patch_rows(&[zc], cfg.template_size)?;
    let searches = (1..3)
        .map(|t| {
            let c = crop_resize(&seq.frames[t], &crop_window(&seq.gt[t - 1], 4.0, cfg.search_size)?);
            aligned.patch_rows(&[c], cfg.search_size)
        })
        .collect::<rewardloc::Result<Vec<_>>>()?;

    println!("layer-aligned");
    let a = run(&aligned, &template, &searches)?;
    let mut deep = Model::new(ModelConfig { propagation: Propagation::DeepToShallow, ..cfg.clone() })?;
    deep.copy_matching(&aligned.params);
    println!("deep-to-shallow (same weights)");
    let d = run(&deep, &template, &searches)?;
    for t in 0..2 {
        let diff = a[t].data.iter().zip(&d[t].data).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        println!("frame {t}: max feature difference between routings {diff:.3e}");
    }
    Ok(())
}
