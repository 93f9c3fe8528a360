//! Finite-difference verification of analytic parameter gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Graph, ParamId, Var};
use crate::error::{Error, Result};

use super::{collect_grads, ParamStore};

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Coordinates dropped because the loss has a kink within `epsilon`.
    pub skipped_kinks: usize,
    /// Largest analytic gradient magnitude among checked coordinates.
    pub max_abs_grad: f64,
}

/// Relative errors below this gradient scale are measured against it.
pub const GRAD_FLOOR: f64 = 1e-5;

/// Compares analytic gradients of the scalar built by `build` against central
/// differences on `coords` random trainable coordinates.
///
/// `build` must construct the loss from scratch in the graph it is given and
/// be deterministic in the store's values.
pub fn gradient_check<F>(store: &mut ParamStore, epsilon: f64, coords: usize, seed: u64, mut build: F) -> Result<GradCheckReport>
where
    F: FnMut(&mut Graph, &ParamStore) -> Result<Var>,
{
    let mut g = Graph::new();
    let loss = build(&mut g, store)?;
    let l0 = g.value(loss).item();
    if !l0.is_finite() {
        return Err(Error::Numerical(format!("non-finite loss {l0}")));
    }
    let grads = collect_grads(store, g.backward(loss).params());
    drop(g);
    let mut eval = |store: &ParamStore| -> Result<f64> {
        let mut g = Graph::new();
        let l = build(&mut g, store)?;
        let v = g.value(l).item();
        if !v.is_finite() {
            return Err(Error::Numerical(format!("non-finite loss {v}")));
        }
        Ok(v)
    };

    let pool: Vec<(ParamId, usize)> = store
        .iter()
        .filter(|(_, p)| p.trainable)
        .flat_map(|(id, p)| (0..p.value.len()).map(move |i| (id, i)))
        .collect();
    if pool.is_empty() {
        return Err(Error::invalid("no trainable parameters to check"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        skipped_kinks: 0,
        max_abs_grad: 0.0,
    };
    let mut attempts = 0;
    while report.checked < coords && attempts < coords * 4 {
        attempts += 1;
        let (id, i) = pool[rng.gen_range(0..pool.len())];
        let analytic = grads[id.0].as_ref().map_or(0.0, |t| t.data[i]);
        let orig = store.value(id).data[i];
        store.value_mut(id).data[i] = orig + epsilon;
        let plus = eval(store);
        store.value_mut(id).data[i] = orig - epsilon;
        let minus = eval(store);
        store.value_mut(id).data[i] = orig;
        let (plus, minus) = (plus?, minus?);
        let fwd = (plus - l0) / epsilon;
        let bwd = (l0 - minus) / epsilon;
        let scale = fwd.abs().max(bwd.abs()).max(1e-2);
        if (fwd - bwd).abs() > 1e-2 * scale {
            report.skipped_kinks += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * epsilon);
        let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_FLOOR);
        report.max_rel_error = report.max_rel_error.max(err);
        report.max_abs_grad = report.max_abs_grad.max(analytic.abs());
        report.checked += 1;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::Tensor;

    #[test]
    fn quadratic_is_exact() {
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::from_vec(2, 3, vec![0.5, -1.0, 2.0, 0.25, 1.5, -0.75]));
        let r = gradient_check(&mut s, 1e-4, 200, 0, |g, s| {
            let w = g.param(id, s.value(id), true);
            let sq = g.square(w);
            let sc = g.scale(sq, 3.0);
            Ok(g.sum(sc))
        })
        .unwrap();
        assert_eq!(r.checked, 200);
        assert!(r.max_rel_error < 1e-8, "{r:?}");
    }

    #[test]
    fn non_finite_loss_is_an_error() {
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::filled(1, 1, -1.0));
        let r = gradient_check(&mut s, 1e-4, 5, 0, |g, s| {
            let w = g.param(id, s.value(id), true);
            let l = g.log(w);
            Ok(g.sum(l))
        });
        assert!(matches!(r, Err(Error::Numerical(_))));
    }
}
