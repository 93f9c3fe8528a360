//! Finite-difference check of the warmup regression loss on a tiny model.
//!
//! The loss is rebuilt from scratch for every perturbed coordinate, so this
//! exercises the whole encoder, the box head and the GIoU/L1 loss.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rewardloc::model::gradcheck::gradient_check;
use rewardloc::model::{Binder, Model, ModelConfig};
use rewardloc::synthworld::{generate_sequence, WorldSpec};
use rewardloc::train::{draw_batch, warmup_loss, HeadInput, TrainConfig};

fn main() -> rewardloc::Result<()> {
    let mut model = Model::new(ModelConfig::tiny())?;
    // box head outputs start at zero; nudge them so every path carries gradient
    let ids: Vec<_> = model.params.ids_with_prefix("reg.");
    for id in ids {
        for (k, v) in model.params.value_mut(id).data.iter_mut().enumerate() {
            *v += 0.05 * ((k % 7) as f64 - 3.0);
        }
    }
    let seqs = vec![generate_sequence(&WorldSpec { length: 12, ..WorldSpec::default() }, "g")?];
    let tcfg = TrainConfig { batch: 2, ..TrainConfig::default() };
    let batch = draw_batch(&seqs, &model, &tcfg, 2, &mut ChaCha8Rng::seed_from_u64(0))?;
    let (cells, grid) = (model.cfg.search_tokens(), model.cfg.search_grid());
    let mut store = model.params.clone();
    let report = gradient_check(&mut store, 1e-6, 300, 0, |g, s| {
        let mut b = Binder::new(s);
        let input = HeadInput::encode(&model, g, &mut b, &batch)?;
        let (loss, _, _) = warmup_loss(g, &input, cells, grid, &tcfg)?;
        loss.ok_or_else(|| rewardloc::Error::InvalidInput("no frame in the window".into()))
    })?;
    println!(
        "checked {} coordinates ({} skipped at kinks): max relative error {:.2e}, largest gradient {:.3}",
        report.checked, report.skipped_kinks, report.max_rel_error, report.max_abs_grad
    );
    Ok(())
}
