use std::collections::HashMap;

use rand::Rng;

use crate::autograd::{Graph, ParamId, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub trainable: bool,
}

/// Named parameter tensors in a fixed order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn add(&mut self, name: &str, value: Tensor) -> ParamId {
        assert!(!self.index.contains_key(name), "duplicate parameter {name}");
        self.index.insert(name.to_string(), self.params.len());
        self.params.push(Param {
            name: name.to_string(),
            value: round_f32(value),
            trainable: true,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn set_trainable(&mut self, prefix: &str, trainable: bool) {
        for p in self.params.iter_mut().filter(|p| p.name.starts_with(prefix)) {
            p.trainable = trainable;
        }
    }

    pub fn set_all_trainable(&mut self, trainable: bool) {
        for p in &mut self.params {
            p.trainable = trainable;
        }
    }

    pub fn ids_with_prefix(&self, prefix: &str) -> Vec<ParamId> {
        self.iter()
            .filter(|(_, p)| p.name.starts_with(prefix))
            .map(|(id, _)| id)
            .collect()
    }

    /// Copies of every tensor whose name starts with `prefix`.
    pub fn snapshot(&self, prefix: &str) -> HashMap<ParamId, Tensor> {
        self.iter()
            .filter(|(_, p)| p.name.starts_with(prefix))
            .map(|(id, p)| (id, p.value.clone()))
            .collect()
    }

    /// Replaces values by name; names and shapes must match exactly.
    pub fn load_values(&mut self, values: Vec<(String, Tensor)>) -> Result<()> {
        if values.len() != self.params.len() {
            return Err(Error::Shape(format!(
                "checkpoint has {} tensors, model expects {}",
                values.len(),
                self.params.len()
            )));
        }
        for (name, t) in values {
            let Some(&i) = self.index.get(&name) else {
                return Err(Error::Shape(format!("unexpected tensor {name}")));
            };
            let p = &mut self.params[i];
            if p.value.shape() != t.shape() {
                return Err(Error::Shape(format!(
                    "tensor {name}: expected {:?}, found {:?}",
                    p.value.shape(),
                    t.shape()
                )));
            }
            p.value = t;
        }
        Ok(())
    }

    /// Rounds every value to the nearest `f32`.
    pub fn round_to_f32(&mut self) {
        for p in &mut self.params {
            for v in &mut p.value.data {
                *v = *v as f32 as f64;
            }
        }
    }
}

fn round_f32(mut t: Tensor) -> Tensor {
    for v in &mut t.data {
        *v = *v as f32 as f64;
    }
    t
}

pub fn uniform(rng: &mut impl Rng, rows: usize, cols: usize, bound: f64) -> Tensor {
    Tensor::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect(),
    )
}

/// Binds parameters into a graph once per graph, optionally substituting
/// fixed tensors (bound as constants) for some of them.
pub struct Binder<'a> {
    store: &'a ParamStore,
    overrides: Option<&'a HashMap<ParamId, Tensor>>,
    vars: Vec<Option<Var>>,
}

impl<'a> Binder<'a> {
    pub fn new(store: &'a ParamStore) -> Self {
        Binder {
            store,
            overrides: None,
            vars: vec![None; store.len()],
        }
    }

    pub fn with_overrides(store: &'a ParamStore, overrides: &'a HashMap<ParamId, Tensor>) -> Self {
        Binder {
            overrides: Some(overrides),
            ..Binder::new(store)
        }
    }

    pub fn store(&self) -> &ParamStore {
        self.store
    }

    pub fn get(&mut self, g: &mut Graph, id: ParamId) -> Var {
        if let Some(v) = self.vars[id.0] {
            return v;
        }
        let v = match self.overrides.and_then(|o| o.get(&id)) {
            Some(t) => g.constant(t.clone()),
            None => {
                let p = self.store.get(id);
                g.param(id, &p.value, p.trainable)
            }
        };
        self.vars[id.0] = Some(v);
        v
    }
}

/// Sums gradients of parameters bound more than once.
pub fn collect_grads(store: &ParamStore, grads: &[(ParamId, Tensor)]) -> Vec<Option<Tensor>> {
    let mut out: Vec<Option<Tensor>> = vec![None; store.len()];
    for (id, g) in grads {
        match &mut out[id.0] {
            Some(t) => {
                for (a, b) in t.data.iter_mut().zip(&g.data) {
                    *a += b;
                }
            }
            slot @ None => *slot = Some(g.clone()),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_are_f32_representable() {
        let mut s = ParamStore::new();
        let id = s.add("a", Tensor::from_vec(1, 2, vec![0.1, 1.0 / 3.0]));
        for v in &s.value(id).data {
            assert_eq!(*v, *v as f32 as f64);
        }
    }

    #[test]
    fn freeze_by_prefix_binds_constants() {
        let mut s = ParamStore::new();
        let a = s.add("enc.w", Tensor::filled(1, 1, 1.0));
        let b = s.add("head.w", Tensor::filled(1, 1, 1.0));
        s.set_trainable("enc.", false);
        let mut g = Graph::new();
        let mut binder = Binder::new(&s);
        let va = binder.get(&mut g, a);
        let vb = binder.get(&mut g, b);
        assert!(!g.needs_grad(va));
        assert!(g.needs_grad(vb));
        assert_eq!(binder.get(&mut g, a), va);
    }

    #[test]
    fn load_values_checks_shapes() {
        let mut s = ParamStore::new();
        s.add("a", Tensor::zeros(2, 2));
        assert!(s.load_values(vec![("a".into(), Tensor::zeros(1, 4))]).is_err());
        assert!(s.load_values(vec![("b".into(), Tensor::zeros(2, 2))]).is_err());
        s.load_values(vec![("a".into(), Tensor::filled(2, 2, 3.0))]).unwrap();
    }
}
