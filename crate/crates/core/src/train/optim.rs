use crate::autograd::Tensor;
use crate::model::ParamStore;

/// Adam with decoupled weight decay. Parameters are rounded to `f32` after
/// every update so checkpoints stay exact.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    m: Vec<Option<Tensor>>,
    v: Vec<Option<Tensor>>,
}

impl AdamW {
    pub fn new(n_params: usize, beta1: f64, beta2: f64, eps: f64, weight_decay: f64) -> Self {
        AdamW {
            beta1,
            beta2,
            eps,
            weight_decay,
            step: 0,
            m: vec![None; n_params],
            v: vec![None; n_params],
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update to every trainable parameter that has a gradient.
    /// `lr` maps a parameter name to its rate. Weight decay skips biases and
    /// normalization gains (names not ending in `.w`).
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Option<Tensor>], lr: impl Fn(&str) -> f64) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let ids: Vec<_> = store.iter().filter(|(_, p)| p.trainable).map(|(id, _)| id).collect();
        for id in ids {
            let Some(g) = &grads[id.0] else { continue };
            let (rate, decay) = {
                let p = store.get(id);
                let wd = if p.name.ends_with(".w") { self.weight_decay } else { 0.0 };
                (lr(&p.name), wd)
            };
            let m = self.m[id.0].get_or_insert_with(|| Tensor::zeros(g.rows, g.cols));
            let v = self.v[id.0].get_or_insert_with(|| Tensor::zeros(g.rows, g.cols));
            let w = store.value_mut(id);
            for i in 0..g.data.len() {
                let gi = g.data[i];
                m.data[i] = self.beta1 * m.data[i] + (1.0 - self.beta1) * gi;
                v.data[i] = self.beta2 * v.data[i] + (1.0 - self.beta2) * gi * gi;
                let mh = m.data[i] / bc1;
                let vh = v.data[i] / bc2;
                let x = w.data[i];
                let upd = x - rate * (mh / (vh.sqrt() + self.eps) + decay * x);
                w.data[i] = upd as f32 as f64;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_a_quadratic_and_skips_frozen() {
        let mut s = ParamStore::new();
        let a = s.add("a.w", Tensor::filled(1, 2, 2.0));
        let b = s.add("b.w", Tensor::filled(1, 1, 2.0));
        s.set_trainable("b.", false);
        let mut opt = AdamW::new(s.len(), 0.9, 0.999, 1e-8, 0.0);
        for _ in 0..500 {
            let g: Vec<Option<Tensor>> = s.iter().map(|(_, p)| Some(Tensor::from_vec(1, p.value.cols, p.value.data.iter().map(|x| 2.0 * x).collect()))).collect();
            opt.step(&mut s, &g, |_| 0.05);
        }
        assert!(s.value(a).data.iter().all(|v| v.abs() < 1e-2));
        assert_eq!(s.value(b).data[0], 2.0);
    }
}
