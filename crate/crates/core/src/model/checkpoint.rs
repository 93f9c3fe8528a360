//! Checkpoint directories: `params.bin` holds `(name, shape, f32 LE data)`
//! records, `model.cfg` the model configuration as `key=value` lines.

use std::fs;
use std::path::Path;

use crate::autograd::Tensor;
use crate::error::{Error, Result};
use crate::kv::Kv;

use super::{Model, ModelConfig};

pub const CHECKPOINT_PARAMS: &str = "params.bin";
pub const CHECKPOINT_CONFIG: &str = "model.cfg";
const MAGIC: &[u8; 8] = b"RLOCPRM1";

fn encode(model: &Model) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(model.params.len() as u32).to_le_bytes());
    for (_, p) in model.params.iter() {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.extend_from_slice(&(p.value.rows as u32).to_le_bytes());
        out.extend_from_slice(&(p.value.cols as u32).to_le_bytes());
        for &v in &p.value.data {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format {
                path: self.path.to_path_buf(),
                msg: "truncated parameter file".into(),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }
}

fn decode(buf: &[u8], path: &Path) -> Result<Vec<(String, Tensor)>> {
    let mut r = Reader { buf, pos: 0, path };
    if r.take(8)? != MAGIC {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: "not a parameter file".into(),
        });
    }
    let count = r.u32()?;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let n = r.u32()?;
        let name = String::from_utf8(r.take(n)?.to_vec()).map_err(|_| Error::Format {
            path: path.to_path_buf(),
            msg: "tensor name is not UTF-8".into(),
        })?;
        let rows = r.u32()?;
        let cols = r.u32()?;
        let raw = r.take(rows * cols * 4)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        out.push((name, Tensor::from_vec(rows, cols, data)));
    }
    if r.pos != buf.len() {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: "trailing bytes after the last tensor".into(),
        });
    }
    Ok(out)
}

pub fn save_checkpoint(model: &Model, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let p = dir.join(CHECKPOINT_PARAMS);
    fs::write(&p, encode(model)).map_err(|e| Error::io(&p, e))?;
    let mut kv = Kv::new();
    model.cfg.write_kv(&mut kv, "model.");
    kv.save(&dir.join(CHECKPOINT_CONFIG))
}

/// Loads a checkpoint directory. Every parameter comes back trainable.
pub fn load_checkpoint(dir: &Path) -> Result<Model> {
    let cfg_path = dir.join(CHECKPOINT_CONFIG);
    let p = dir.join(CHECKPOINT_PARAMS);
    if !p.exists() {
        return Err(Error::Missing(p));
    }
    let cfg = ModelConfig::read_kv(&Kv::load(&cfg_path)?, "model.")?;
    let buf = fs::read(&p).map_err(|e| Error::io(&p, e))?;
    let mut model = Model::new(cfg)?;
    model.params.load_values(decode(&buf, &p)?)?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut model = Model::new(ModelConfig::tiny()).unwrap();
        let id = model.params.id("policy.out.w").unwrap();
        model.params.value_mut(id).data[0] = 0.1f32 as f64;
        save_checkpoint(&model, dir.path()).unwrap();
        let back = load_checkpoint(dir.path()).unwrap();
        assert_eq!(back.cfg, model.cfg);
        for ((_, a), (_, b)) in back.params.iter().zip(model.params.iter()) {
            assert_eq!(a.name, b.name);
            let ab: Vec<u64> = a.value.data.iter().map(|v| v.to_bits()).collect();
            let bb: Vec<u64> = b.value.data.iter().map(|v| v.to_bits()).collect();
            assert_eq!(ab, bb);
        }
        save_checkpoint(&back, &dir.path().join("again")).unwrap();
        assert_eq!(
            fs::read(dir.path().join(CHECKPOINT_PARAMS)).unwrap(),
            fs::read(dir.path().join("again").join(CHECKPOINT_PARAMS)).unwrap()
        );
    }

    #[test]
    fn config_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let model = Model::new(ModelConfig::tiny()).unwrap();
        save_checkpoint(&model, dir.path()).unwrap();
        let mut kv = Kv::load(&dir.path().join(CHECKPOINT_CONFIG)).unwrap();
        kv.set("model.embed_dim", 16);
        kv.save(&dir.path().join(CHECKPOINT_CONFIG)).unwrap();
        assert!(load_checkpoint(dir.path()).is_err());
    }

    #[test]
    fn truncated_file_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let model = Model::new(ModelConfig::tiny()).unwrap();
        save_checkpoint(&model, dir.path()).unwrap();
        let p = dir.path().join(CHECKPOINT_PARAMS);
        let buf = fs::read(&p).unwrap();
        fs::write(&p, &buf[..buf.len() - 3]).unwrap();
        assert!(matches!(load_checkpoint(dir.path()), Err(Error::Format { .. })));
    }
}
