use crate::error::{Error, Result};
use crate::kv::Kv;

/// How temporal tokens of frame `t-1` enter frame `t`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Propagation {
    /// Tokens entering layer `l` at `t-1` are injected at layer `l`.
    LayerAligned,
    /// The final-layer tokens of `t-1` are injected at the first layer.
    DeepToShallow,
}

impl Propagation {
    pub fn name(self) -> &'static str {
        match self {
            Propagation::LayerAligned => "layer-aligned",
            Propagation::DeepToShallow => "deep-to-shallow",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "layer-aligned" => Ok(Propagation::LayerAligned),
            "deep-to-shallow" => Ok(Propagation::DeepToShallow),
            _ => Err(Error::Config(format!("unknown propagation {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    pub patch: usize,
    /// Template crop side in pixels.
    pub template_size: usize,
    /// Search crop side in pixels.
    pub search_size: usize,
    pub temporal_tokens: usize,
    pub head_depth: usize,
    pub head_channels: usize,
    pub head_groups: usize,
    pub templates: usize,
    pub propagation: Propagation,
    /// Adds the two-channel corner head used by the corner baseline.
    pub corner_head: bool,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed_dim: 64,
            layers: 4,
            heads: 4,
            mlp_ratio: 2,
            patch: 8,
            template_size: 32,
            search_size: 64,
            temporal_tokens: 4,
            head_depth: 3,
            head_channels: 32,
            head_groups: 4,
            templates: 1,
            propagation: Propagation::LayerAligned,
            corner_head: false,
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    /// Tiny network for gradient checks and fast tests.
    pub fn tiny() -> Self {
        ModelConfig {
            embed_dim: 8,
            layers: 2,
            heads: 2,
            mlp_ratio: 2,
            patch: 8,
            template_size: 16,
            search_size: 32,
            temporal_tokens: 2,
            head_depth: 2,
            head_channels: 4,
            head_groups: 2,
            ..ModelConfig::default()
        }
    }

    pub fn template_grid(&self) -> usize {
        self.template_size / self.patch
    }

    pub fn search_grid(&self) -> usize {
        self.search_size / self.patch
    }

    /// Template tokens per sample, over all templates.
    pub fn template_tokens(&self) -> usize {
        self.templates * self.template_grid() * self.template_grid()
    }

    pub fn search_tokens(&self) -> usize {
        self.search_grid() * self.search_grid()
    }

    pub fn patch_dim(&self) -> usize {
        self.patch * self.patch * 3
    }

    /// Number of stored temporal token sets carried to the next frame.
    pub fn carried_sets(&self) -> usize {
        match (self.temporal_tokens, self.propagation) {
            (0, _) => 0,
            (_, Propagation::LayerAligned) => self.layers,
            (_, Propagation::DeepToShallow) => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.embed_dim == 0 || self.heads == 0 || self.embed_dim % self.heads != 0 {
            return bad(format!("embed_dim {} not divisible by heads {}", self.embed_dim, self.heads));
        }
        if self.layers == 0 || self.mlp_ratio == 0 || self.head_depth == 0 {
            return bad("layers, mlp_ratio and head_depth must be positive".into());
        }
        if self.patch == 0 || self.template_size % self.patch != 0 || self.search_size % self.patch != 0 {
            return bad("crop sizes must be multiples of the patch size".into());
        }
        if self.template_size == 0 || self.search_tokens() < 2 {
            return bad("the search grid needs at least two cells".into());
        }
        if self.head_groups == 0 || self.head_channels % self.head_groups != 0 {
            return bad("head_channels must be divisible by head_groups".into());
        }
        if !(1..=2).contains(&self.templates) {
            return bad("templates must be 1 or 2".into());
        }
        Ok(())
    }

    pub fn write_kv(&self, kv: &mut Kv, prefix: &str) {
        kv.set(&format!("{prefix}embed_dim"), self.embed_dim);
        kv.set(&format!("{prefix}layers"), self.layers);
        kv.set(&format!("{prefix}heads"), self.heads);
        kv.set(&format!("{prefix}mlp_ratio"), self.mlp_ratio);
        kv.set(&format!("{prefix}patch"), self.patch);
        kv.set(&format!("{prefix}template_size"), self.template_size);
        kv.set(&format!("{prefix}search_size"), self.search_size);
        kv.set(&format!("{prefix}temporal_tokens"), self.temporal_tokens);
        kv.set(&format!("{prefix}head_depth"), self.head_depth);
        kv.set(&format!("{prefix}head_channels"), self.head_channels);
        kv.set(&format!("{prefix}head_groups"), self.head_groups);
        kv.set(&format!("{prefix}templates"), self.templates);
        kv.set(&format!("{prefix}propagation"), self.propagation.name());
        kv.set(&format!("{prefix}corner_head"), self.corner_head);
        kv.set(&format!("{prefix}init_seed"), self.init_seed);
    }

    pub fn read_kv(kv: &Kv, prefix: &str) -> Result<Self> {
        let d = ModelConfig::default();
        let k = |name: &str| format!("{prefix}{name}");
        let cfg = ModelConfig {
            embed_dim: kv.get_or(&k("embed_dim"), d.embed_dim)?,
            layers: kv.get_or(&k("layers"), d.layers)?,
            heads: kv.get_or(&k("heads"), d.heads)?,
            mlp_ratio: kv.get_or(&k("mlp_ratio"), d.mlp_ratio)?,
            patch: kv.get_or(&k("patch"), d.patch)?,
            template_size: kv.get_or(&k("template_size"), d.template_size)?,
            search_size: kv.get_or(&k("search_size"), d.search_size)?,
            temporal_tokens: kv.get_or(&k("temporal_tokens"), d.temporal_tokens)?,
            head_depth: kv.get_or(&k("head_depth"), d.head_depth)?,
            head_channels: kv.get_or(&k("head_channels"), d.head_channels)?,
            head_groups: kv.get_or(&k("head_groups"), d.head_groups)?,
            templates: kv.get_or(&k("templates"), d.templates)?,
            propagation: Propagation::parse(kv.get_str(&k("propagation")).unwrap_or(d.propagation.name()))?,
            corner_head: kv.get_or(&k("corner_head"), d.corner_head)?,
            init_seed: kv.get_or(&k("init_seed"), d.init_seed)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
