//! The full run configuration as one flat `key=value` file.

use std::path::Path;

use crate::error::{Error, Result};
use crate::kv::Kv;
use crate::model::ModelConfig;
use crate::rl::RlConfig;
use crate::synthworld::{SplitSpec, WorldSpec};
use crate::train::TrainConfig;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Config {
    pub split: SplitSpec,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub rl: RlConfig,
}

fn write_world(w: &WorldSpec, kv: &mut Kv) {
    kv.set("world.canvas", w.canvas);
    kv.set("world.length", w.length);
    kv.set("world.velocity_min", w.velocity.0);
    kv.set("world.velocity_max", w.velocity.1);
    kv.set("world.scale_amplitude", w.scale_amplitude);
    kv.set("world.size_min", w.size.0);
    kv.set("world.size_max", w.size.1);
    kv.set("world.distractors", w.distractors);
    kv.set("world.occlusion_prob", w.occlusion_prob);
    kv.set("world.occluder_scale_min", w.occluder_scale.0);
    kv.set("world.occluder_scale_max", w.occluder_scale.1);
    kv.set("world.occluder_offset", w.occluder_offset);
    kv.set("world.brightness_drift", w.brightness_drift);
}

fn read_world(kv: &Kv) -> Result<WorldSpec> {
    let d = WorldSpec::default();
    let w = WorldSpec {
        canvas: kv.get_or("world.canvas", d.canvas)?,
        length: kv.get_or("world.length", d.length)?,
        velocity: (kv.get_or("world.velocity_min", d.velocity.0)?, kv.get_or("world.velocity_max", d.velocity.1)?),
        scale_amplitude: kv.get_or("world.scale_amplitude", d.scale_amplitude)?,
        size: (kv.get_or("world.size_min", d.size.0)?, kv.get_or("world.size_max", d.size.1)?),
        distractors: kv.get_or("world.distractors", d.distractors)?,
        occlusion_prob: kv.get_or("world.occlusion_prob", d.occlusion_prob)?,
        occluder_scale: (
            kv.get_or("world.occluder_scale_min", d.occluder_scale.0)?,
            kv.get_or("world.occluder_scale_max", d.occluder_scale.1)?,
        ),
        occluder_offset: kv.get_or("world.occluder_offset", d.occluder_offset)?,
        brightness_drift: kv.get_or("world.brightness_drift", d.brightness_drift)?,
        ..d
    };
    w.validate()?;
    Ok(w)
}

impl Config {
    /// A reduced budget that trains in a few minutes on one core, with a
    /// cached-feature second stage.
    pub fn quick() -> Self {
        Config {
            train: TrainConfig {
                warmup_epochs: 10,
                warmup_clips: 400,
                rl_epochs: 10,
                rl_clips: 200,
                bank_clips: 200,
                checkpoint_every: 0,
                ..TrainConfig::default()
            },
            ..Config::default()
        }
    }

    pub fn to_kv(&self) -> Kv {
        let mut kv = Kv::new();
        kv.set("split.seed", self.split.seed);
        kv.set("split.train", self.split.train);
        kv.set("split.val", self.split.val);
        kv.set("split.shifted_test", self.split.shifted_test);
        write_world(&self.split.base, &mut kv);
        self.model.write_kv(&mut kv, "model.");
        self.train.write_kv(&mut kv, "train.");
        self.rl.write_kv(&mut kv, "rl.");
        kv
    }

    /// Reads a config; absent keys keep their defaults, unknown keys are errors.
    pub fn from_kv(kv: &Kv) -> Result<Self> {
        kv.check_known(&Config::default().to_kv())?;
        let d = SplitSpec::default();
        let cfg = Config {
            split: SplitSpec {
                seed: kv.get_or("split.seed", d.seed)?,
                train: kv.get_or("split.train", d.train)?,
                val: kv.get_or("split.val", d.val)?,
                shifted_test: kv.get_or("split.shifted_test", d.shifted_test)?,
                base: read_world(kv)?,
            },
            model: ModelConfig::read_kv(kv, "model.")?,
            train: TrainConfig::read_kv(kv, "train.")?,
            rl: RlConfig::read_kv(kv, "rl.")?,
        };
        if cfg.model.search_size as f64 >= cfg.split.base.canvas as f64 * 4.0 {
            return Err(Error::Config("search crop is far larger than the canvas".into()));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Config::from_kv(&Kv::load(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_kv().save(path)
    }

    pub fn to_text(&self) -> String {
        self.to_kv().to_text()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut c = Config::quick();
        c.split.base.velocity = (1.0, 2.5);
        c.rl.lambda = 0.0;
        let kv = Kv::parse(&c.to_text(), Path::new("cfg")).unwrap();
        assert_eq!(Config::from_kv(&kv).unwrap(), c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let kv = Kv::parse("train.epochz=3\n", Path::new("cfg")).unwrap();
        assert!(matches!(Config::from_kv(&kv), Err(Error::Config(_))));
    }

    #[test]
    fn partial_files_keep_defaults() {
        let kv = Kv::parse("rl.lambda=0.5\n", Path::new("cfg")).unwrap();
        let c = Config::from_kv(&kv).unwrap();
        assert_eq!(c.rl.lambda, 0.5);
        assert_eq!(c.train, TrainConfig::default());
    }
}
