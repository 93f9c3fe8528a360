//! The tracking network: patch embedding, a one-stream transformer encoder
//! with temporal tokens carried across frames, and convolutional heads for
//! per-cell boxes, policy logits, a value map and (optionally) corners.

mod checkpoint;
mod config;
pub mod gradcheck;
mod params;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_PARAMS, CHECKPOINT_CONFIG};
pub use config::{ModelConfig, Propagation};
pub use params::{collect_grads, uniform, Binder, Param, ParamStore};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Graph, ParamId, Tensor, Var};
use crate::error::{Error, Result};
use crate::imaging::{patchify, Crop};

/// Parameter-name prefixes of the encoder side (embeddings, temporal tokens,
/// transformer layers).
pub const ENCODER_PREFIXES: [&str; 3] = ["embed.", "temporal.", "encoder."];
pub const REG_PREFIX: &str = "reg.";
pub const POLICY_PREFIX: &str = "policy.";
pub const VALUE_PREFIX: &str = "value.";
pub const CORNER_PREFIX: &str = "corner.";

#[derive(Clone, Debug)]
struct LayerIds {
    ln1_g: ParamId,
    ln1_b: ParamId,
    qkv_w: ParamId,
    qkv_b: ParamId,
    proj_w: ParamId,
    proj_b: ParamId,
    ln2_g: ParamId,
    ln2_b: ParamId,
    fc1_w: ParamId,
    fc1_b: ParamId,
    fc2_w: ParamId,
    fc2_b: ParamId,
}

#[derive(Clone, Debug)]
struct HeadIds {
    convs: Vec<(ParamId, ParamId, ParamId, ParamId)>,
    out_w: ParamId,
    out_b: ParamId,
}

#[derive(Clone, Debug)]
struct Ids {
    patch_w: ParamId,
    patch_b: ParamId,
    pos_z: ParamId,
    pos_x: ParamId,
    temporal: Option<(ParamId, ParamId)>,
    layers: Vec<LayerIds>,
    norm_g: ParamId,
    norm_b: ParamId,
    reg: HeadIds,
    policy: HeadIds,
    value: HeadIds,
    corner: Option<HeadIds>,
}

#[derive(Clone, Debug)]
pub struct Model {
    pub cfg: ModelConfig,
    pub params: ParamStore,
    ids: Ids,
}

/// Tokens entering one encoder layer, per sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerTokens {
    /// Template + search + current temporal tokens.
    pub within_frame: usize,
    /// Including propagated tokens from the previous frame.
    pub total: usize,
}

pub struct Encoded {
    /// Final search tokens, `[batch * H * W, C]`.
    pub features: Var,
    /// Token sets to carry into the next frame, each `[batch * N_t, C]`.
    pub temporal: Vec<Var>,
    pub layer_tokens: Vec<LayerTokens>,
}

fn ln_pair(store: &mut ParamStore, name: &str, c: usize) -> (ParamId, ParamId) {
    (
        store.add(&format!("{name}.g"), Tensor::filled(1, c, 1.0)),
        store.add(&format!("{name}.b"), Tensor::zeros(1, c)),
    )
}

fn linear(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, fan_in: usize, fan_out: usize) -> (ParamId, ParamId) {
    let bound = 1.0 / (fan_in as f64).sqrt();
    (
        store.add(&format!("{name}.w"), uniform(rng, fan_in, fan_out, bound)),
        store.add(&format!("{name}.b"), Tensor::zeros(1, fan_out)),
    )
}

fn head(store: &mut ParamStore, rng: &mut ChaCha8Rng, cfg: &ModelConfig, name: &str, out: usize) -> HeadIds {
    let mut convs = Vec::new();
    let mut cin = cfg.embed_dim;
    for k in 0..cfg.head_depth {
        let (w, b) = linear(store, rng, &format!("{name}.conv{k}"), 9 * cin, cfg.head_channels);
        let (g, bt) = ln_pair(store, &format!("{name}.gn{k}"), cfg.head_channels);
        convs.push((w, b, g, bt));
        cin = cfg.head_channels;
    }
    HeadIds {
        convs,
        out_w: store.add(&format!("{name}.out.w"), Tensor::zeros(cin, out)),
        out_b: store.add(&format!("{name}.out.b"), Tensor::zeros(1, out)),
    }
}

impl Model {
    /// Fresh parameters drawn from `cfg.init_seed`. Output layers of every
    /// head start at zero.
    pub fn new(cfg: ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.init_seed);
        let mut s = ParamStore::new();
        let c = cfg.embed_dim;
        let emb = 0.02 * 3f64.sqrt();
        let (patch_w, patch_b) = linear(&mut s, &mut rng, "embed.patch", cfg.patch_dim(), c);
        let pos_z = s.add("embed.pos_z", uniform(&mut rng, cfg.template_tokens(), c, emb));
        let pos_x = s.add("embed.pos_x", uniform(&mut rng, cfg.search_tokens(), c, emb));
        let temporal = (cfg.temporal_tokens > 0).then(|| {
            (
                s.add("temporal.init", uniform(&mut rng, cfg.temporal_tokens, c, emb)),
                s.add("temporal.prev", uniform(&mut rng, cfg.temporal_tokens, c, emb)),
            )
        });
        let hidden = c * cfg.mlp_ratio;
        let layers = (0..cfg.layers)
            .map(|l| {
                let p = format!("encoder.{l}");
                let (ln1_g, ln1_b) = ln_pair(&mut s, &format!("{p}.ln1"), c);
                let (qkv_w, qkv_b) = linear(&mut s, &mut rng, &format!("{p}.attn.qkv"), c, 3 * c);
                let (proj_w, proj_b) = linear(&mut s, &mut rng, &format!("{p}.attn.proj"), c, c);
                let (ln2_g, ln2_b) = ln_pair(&mut s, &format!("{p}.ln2"), c);
                let (fc1_w, fc1_b) = linear(&mut s, &mut rng, &format!("{p}.mlp.fc1"), c, hidden);
                let (fc2_w, fc2_b) = linear(&mut s, &mut rng, &format!("{p}.mlp.fc2"), hidden, c);
                LayerIds {
                    ln1_g,
                    ln1_b,
                    qkv_w,
                    qkv_b,
                    proj_w,
                    proj_b,
                    ln2_g,
                    ln2_b,
                    fc1_w,
                    fc1_b,
                    fc2_w,
                    fc2_b,
                }
            })
            .collect();
        let (norm_g, norm_b) = ln_pair(&mut s, "encoder.norm", c);
        let reg = head(&mut s, &mut rng, &cfg, "reg", 4);
        let policy = head(&mut s, &mut rng, &cfg, "policy", 1);
        let value = head(&mut s, &mut rng, &cfg, "value", 1);
        let corner = cfg.corner_head.then(|| head(&mut s, &mut rng, &cfg, "corner", 2));
        Ok(Model {
            cfg,
            params: s,
            ids: Ids {
                patch_w,
                patch_b,
                pos_z,
                pos_x,
                temporal,
                layers,
                norm_g,
                norm_b,
                reg,
                policy,
                value,
                corner,
            },
        })
    }

    /// Marks every parameter group trainable or frozen by prefix.
    /// Copies every tensor of `src` whose name and shape exist here.
    /// Returns how many were copied.
    pub fn copy_matching(&mut self, src: &ParamStore) -> usize {
        let mut n = 0;
        for (_, p) in src.iter() {
            if let Some(id) = self.params.id(&p.name) {
                if self.params.value(id).shape() == p.value.shape() {
                    *self.params.value_mut(id) = p.value.clone();
                    n += 1;
                }
            }
        }
        n
    }

    pub fn set_trainable(&mut self, prefix: &str, trainable: bool) {
        self.params.set_trainable(prefix, trainable);
    }

    pub fn set_encoder_trainable(&mut self, trainable: bool) {
        for p in ENCODER_PREFIXES {
            self.params.set_trainable(p, trainable);
        }
    }

    /// Stacks per-sample patch rows: templates `[batch * nz, P]`, searches
    /// `[batch * nx, P]`. `templates` holds `cfg.templates` crops per sample.
    pub fn patch_inputs(&self, templates: &[Crop], searches: &[Crop]) -> Result<(Tensor, Tensor)> {
        let batch = searches.len();
        if templates.len() != batch * self.cfg.templates {
            return Err(Error::Shape(format!(
                "expected {} template crops for {batch} samples, got {}",
                batch * self.cfg.templates,
                templates.len()
            )));
        }
        Ok((
            self.patch_rows(templates, self.cfg.template_size)?,
            self.patch_rows(searches, self.cfg.search_size)?,
        ))
    }

    /// Patch rows of `crops`, stacked, after checking their resolution.
    pub fn patch_rows(&self, crops: &[Crop], resolution: usize) -> Result<Tensor> {
        let mut data = Vec::new();
        for c in crops {
            if c.resolution != resolution {
                return Err(Error::Shape(format!("crop is {} px, expected {resolution}", c.resolution)));
            }
            data.extend(patchify(c, self.cfg.patch).data);
        }
        let cols = self.cfg.patch_dim();
        Ok(Tensor::from_vec(data.len() / cols, cols, data))
    }

    /// Runs the encoder on a batch. `prev` is empty on the first frame or
    /// holds the token sets returned for the previous frame.
    pub fn encode(
        &self,
        g: &mut Graph,
        b: &mut Binder,
        template: Var,
        search: Var,
        batch: usize,
        prev: &[Var],
    ) -> Result<Encoded> {
        let cfg = &self.cfg;
        let (nz, nx, nt, c) = (cfg.template_tokens(), cfg.search_tokens(), cfg.temporal_tokens, cfg.embed_dim);
        let pd = cfg.patch_dim();
        if g.shape(template) != (batch * nz, pd) || g.shape(search) != (batch * nx, pd) {
            return Err(Error::Shape(format!(
                "encoder inputs {:?} / {:?} do not match batch {batch} of {nz}/{nx} patches of {pd}",
                g.shape(template),
                g.shape(search)
            )));
        }
        if !prev.is_empty() && prev.len() != cfg.carried_sets() {
            return Err(Error::Shape(format!(
                "expected {} carried token sets, got {}",
                cfg.carried_sets(),
                prev.len()
            )));
        }
        for &p in prev {
            if g.shape(p) != (batch * nt, c) {
                return Err(Error::Shape(format!("carried tokens have shape {:?}", g.shape(p))));
            }
        }

        let pw = b.get(g, self.ids.patch_w);
        let pb = b.get(g, self.ids.patch_b);
        let ez = g.matmul(template, pw);
        let ez = g.add_row(ez, pb);
        let pos_z = b.get(g, self.ids.pos_z);
        let mut z = g.add_tiled(ez, pos_z);
        let ex = g.matmul(search, pw);
        let ex = g.add_row(ex, pb);
        let pos_x = b.get(g, self.ids.pos_x);
        let mut x = g.add_tiled(ex, pos_x);

        let mut tcur = None;
        let mut prev_emb = None;
        if let Some((init, pe)) = self.ids.temporal {
            let init = b.get(g, init);
            tcur = Some(g.tile_rows(init, batch));
            prev_emb = Some(b.get(g, pe));
        }

        let mut stored = Vec::new();
        let mut layer_tokens = Vec::with_capacity(cfg.layers);
        for (l, ids) in self.ids.layers.iter().enumerate() {
            let mut parts = vec![z, x];
            if let Some(t) = tcur {
                parts.push(t);
                if cfg.propagation == Propagation::LayerAligned {
                    stored.push(t);
                }
            }
            let injected = match cfg.propagation {
                Propagation::LayerAligned => prev.get(l).copied(),
                Propagation::DeepToShallow if l == 0 => prev.first().copied(),
                Propagation::DeepToShallow => None,
            };
            if let (Some(p), Some(pe)) = (injected, prev_emb) {
                parts.push(g.add_tiled(p, pe));
            }
            let within = nz + nx + if tcur.is_some() { nt } else { 0 };
            let total = within + if injected.is_some() { nt } else { 0 };
            layer_tokens.push(LayerTokens {
                within_frame: within,
                total,
            });
            let h = g.concat_segments(&parts, batch);
            let h = self.layer(g, b, ids, h, batch);
            // propagated tokens (if any) sit after the carried ones and are dropped
            z = g.slice_segments(h, batch, 0, nz);
            x = g.slice_segments(h, batch, nz, nx);
            if tcur.is_some() {
                tcur = Some(g.slice_segments(h, batch, nz + nx, nt));
            }
        }
        if cfg.propagation == Propagation::DeepToShallow {
            if let Some(t) = tcur {
                stored.push(t);
            }
        }
        let ng = b.get(g, self.ids.norm_g);
        let nb = b.get(g, self.ids.norm_b);
        let features = g.layer_norm(x, ng, nb);
        Ok(Encoded {
            features,
            temporal: stored,
            layer_tokens,
        })
    }

    fn layer(&self, g: &mut Graph, b: &mut Binder, ids: &LayerIds, h: Var, batch: usize) -> Var {
        let (g1, b1) = (b.get(g, ids.ln1_g), b.get(g, ids.ln1_b));
        let a = g.layer_norm(h, g1, b1);
        let (w, bias) = (b.get(g, ids.qkv_w), b.get(g, ids.qkv_b));
        let qkv = g.matmul(a, w);
        let qkv = g.add_row(qkv, bias);
        let att = g.attention(qkv, batch, self.cfg.heads);
        let (w, bias) = (b.get(g, ids.proj_w), b.get(g, ids.proj_b));
        let o = g.matmul(att, w);
        let o = g.add_row(o, bias);
        let h = g.add(h, o);
        let (g2, b2) = (b.get(g, ids.ln2_g), b.get(g, ids.ln2_b));
        let m = g.layer_norm(h, g2, b2);
        let (w, bias) = (b.get(g, ids.fc1_w), b.get(g, ids.fc1_b));
        let m = g.matmul(m, w);
        let m = g.add_row(m, bias);
        let m = g.gelu(m);
        let (w, bias) = (b.get(g, ids.fc2_w), b.get(g, ids.fc2_b));
        let m = g.matmul(m, w);
        let m = g.add_row(m, bias);
        g.add(h, m)
    }

    fn head_trunk(&self, g: &mut Graph, b: &mut Binder, ids: &HeadIds, f: Var, batch: usize) -> Var {
        let grid = self.cfg.search_grid();
        let mut x = f;
        for &(w, bias, gm, bt) in &ids.convs {
            let cols = g.im2col3(x, batch, grid, grid);
            let (w, bias) = (b.get(g, w), b.get(g, bias));
            let y = g.matmul(cols, w);
            let y = g.add_row(y, bias);
            let (gm, bt) = (b.get(g, gm), b.get(g, bt));
            let y = g.group_norm(y, gm, bt, batch, self.cfg.head_groups);
            x = g.relu(y);
        }
        let (w, bias) = (b.get(g, ids.out_w), b.get(g, ids.out_b));
        let y = g.matmul(x, w);
        g.add_row(y, bias)
    }

    /// Normalized boxes `[batch * H * W, 4]` as `(x1, y1, x2, y2)` in the
    /// search window. Each cell predicts a center within one cell of its own
    /// center and a size in `(0, 1)`.
    pub fn regression(&self, g: &mut Graph, b: &mut Binder, f: Var, batch: usize) -> Var {
        let raw = self.head_trunk(g, b, &self.ids.reg, f, batch);
        let s = g.sigmoid(raw);
        let grid = self.cfg.search_grid();
        let n = grid as f64;
        let cells = grid * grid;
        let mut base_x = Tensor::zeros(batch * cells, 1);
        let mut base_y = Tensor::zeros(batch * cells, 1);
        for r in 0..batch * cells {
            let cell = r % cells;
            let (i, j) = (cell / grid, cell % grid);
            base_x.data[r] = (j as f64 + 0.5) / n - 1.0 / n;
            base_y.data[r] = (i as f64 + 0.5) / n - 1.0 / n;
        }
        let sx = g.slice_cols(s, 0, 1);
        let sy = g.slice_cols(s, 1, 1);
        let w = g.slice_cols(s, 2, 1);
        let h = g.slice_cols(s, 3, 1);
        let bx = g.constant(base_x);
        let by = g.constant(base_y);
        let ox = g.scale(sx, 2.0 / n);
        let cx = g.add(ox, bx);
        let oy = g.scale(sy, 2.0 / n);
        let cy = g.add(oy, by);
        let hw = g.scale(w, 0.5);
        let hh = g.scale(h, 0.5);
        let x1 = g.sub(cx, hw);
        let x2 = g.add(cx, hw);
        let y1 = g.sub(cy, hh);
        let y2 = g.add(cy, hh);
        let coords: Vec<Var> = [x1, y1, x2, y2].iter().map(|&v| g.clamp(v, 0.0, 1.0)).collect();
        g.concat_cols(&coords)
    }

    /// Policy logits `[batch, H * W]`.
    pub fn policy_logits(&self, g: &mut Graph, b: &mut Binder, f: Var, batch: usize) -> Var {
        let m = self.head_trunk(g, b, &self.ids.policy, f, batch);
        g.reshape(m, batch, self.cfg.search_tokens())
    }

    /// Spatially averaged value estimate `[batch, 1]`.
    pub fn value(&self, g: &mut Graph, b: &mut Binder, f: Var, batch: usize) -> Var {
        let m = self.value_map(g, b, f, batch);
        g.mean_segments(m, batch)
    }

    /// Per-cell value map `[batch * H * W, 1]`.
    pub fn value_map(&self, g: &mut Graph, b: &mut Binder, f: Var, batch: usize) -> Var {
        self.head_trunk(g, b, &self.ids.value, f, batch)
    }

    /// Top-left and bottom-right corner logits, each `[batch, H * W]`.
    pub fn corner_logits(&self, g: &mut Graph, b: &mut Binder, f: Var, batch: usize) -> Result<(Var, Var)> {
        let ids = self
            .ids
            .corner
            .as_ref()
            .ok_or_else(|| Error::Config("model was built without a corner head".into()))?;
        let m = self.head_trunk(g, b, ids, f, batch);
        let cells = self.cfg.search_tokens();
        let tl = g.slice_cols(m, 0, 1);
        let br = g.slice_cols(m, 1, 1);
        Ok((g.reshape(tl, batch, cells), g.reshape(br, batch, cells)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    pub(crate) fn random_inputs(model: &Model, batch: usize, seed: u64) -> (Tensor, Tensor) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = &model.cfg;
        let mut r = |rows| {
            Tensor::from_vec(
                rows,
                cfg.patch_dim(),
                (0..rows * cfg.patch_dim()).map(|_| rng.gen_range(-0.5..0.5)).collect(),
            )
        };
        (r(batch * cfg.template_tokens()), r(batch * cfg.search_tokens()))
    }

    #[test]
    fn token_counts_follow_the_carry_rule() {
        let model = Model::new(ModelConfig::default()).unwrap();
        let (zt, xt) = random_inputs(&model, 1, 0);
        let mut g = Graph::new();
        let mut b = Binder::new(&model.params);
        let z = g.constant(zt);
        let x = g.constant(xt);
        let first = model.encode(&mut g, &mut b, z, x, 1, &[]).unwrap();
        assert!(first.layer_tokens.iter().all(|t| t.total == 84 && t.within_frame == 84));
        assert_eq!(first.temporal.len(), 4);
        assert_eq!(g.shape(first.features), (64, 64));
        let second = model.encode(&mut g, &mut b, z, x, 1, &first.temporal).unwrap();
        assert!(second.layer_tokens.iter().all(|t| t.total == 88 && t.within_frame == 84));
    }

    #[test]
    fn zero_temporal_tokens_reduce_to_plain_encoder() {
        let model = Model::new(ModelConfig {
            temporal_tokens: 0,
            ..ModelConfig::tiny()
        })
        .unwrap();
        let (zt, xt) = random_inputs(&model, 2, 0);
        let mut g = Graph::new();
        let mut b = Binder::new(&model.params);
        let z = g.constant(zt);
        let x = g.constant(xt);
        let e = model.encode(&mut g, &mut b, z, x, 2, &[]).unwrap();
        assert!(e.temporal.is_empty());
        assert!(model.params.id("temporal.init").is_none());
    }

    #[test]
    fn zero_initialised_heads() {
        let model = Model::new(ModelConfig::tiny()).unwrap();
        let (zt, xt) = random_inputs(&model, 1, 1);
        let mut g = Graph::new();
        let mut b = Binder::new(&model.params);
        let z = g.constant(zt);
        let x = g.constant(xt);
        let e = model.encode(&mut g, &mut b, z, x, 1, &[]).unwrap();
        let boxes = model.regression(&mut g, &mut b, e.features, 1);
        let logits = model.policy_logits(&mut g, &mut b, e.features, 1);
        let v = model.value(&mut g, &mut b, e.features, 1);
        let grid = model.cfg.search_grid();
        assert_eq!(g.shape(logits), (1, grid * grid));
        assert!(g.value(logits).data.iter().all(|&l| l == 0.0));
        assert_eq!(g.value(v).item(), 0.0);
        let bx = g.value(boxes);
        // cell (1, 2) on the 4x4 grid: center (0.625, 0.375), size 0.5
        let r = grid + 2;
        let expect = [0.375, 0.125, 0.875, 0.625];
        for k in 0..4 {
            assert!((bx.get(r, k) - expect[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn inputs_must_match_the_config() {
        let model = Model::new(ModelConfig::tiny()).unwrap();
        let mut g = Graph::new();
        let mut b = Binder::new(&model.params);
        let z = g.constant(Tensor::zeros(3, 5));
        let x = g.constant(Tensor::zeros(3, 5));
        assert!(model.encode(&mut g, &mut b, z, x, 1, &[]).is_err());
    }
}
