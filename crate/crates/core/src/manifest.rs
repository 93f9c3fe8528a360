//! Run manifests: what produced an output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kv::Kv;

pub const MANIFEST_FILE: &str = "manifest.txt";

/// SHA-256 of `content` framed as a git blob (`"blob <len>\0" + content`).
pub fn git_blob_sha256(content: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    h.finalize().iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<PathBuf>,
    pub seed: u64,
    pub output: PathBuf,
    /// Hash of the effective config text.
    pub config_hash: String,
    /// Command-specific settings, e.g. flags that override the config.
    pub extra: Vec<(String, String)>,
}

impl RunManifest {
    pub fn new(command: &str, config_path: Option<&Path>, seed: u64, output: &Path, config_text: &str) -> Self {
        RunManifest {
            command: command.to_string(),
            config_path: config_path.map(Path::to_path_buf),
            seed,
            output: output.to_path_buf(),
            config_hash: git_blob_sha256(config_text.as_bytes()),
            extra: Vec::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.extra.push((key.to_string(), value.to_string()));
        self
    }

    pub fn to_kv(&self) -> Kv {
        let mut kv = Kv::new();
        kv.set("command", &self.command);
        kv.set(
            "config",
            self.config_path.as_ref().map_or("(defaults)".to_string(), |p| p.display().to_string()),
        );
        kv.set("seed", self.seed);
        kv.set("output", self.output.display());
        kv.set("config_sha256", &self.config_hash);
        for (k, v) in &self.extra {
            kv.set(&format!("arg.{k}"), v);
        }
        kv
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let p = dir.join(MANIFEST_FILE);
        fs::write(&p, self.to_kv().to_text()).map_err(|e| Error::io(&p, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_git_object_hashing() {
        // `git hash-object --object-format=sha256` on an empty file
        assert_eq!(
            git_blob_sha256(b""),
            "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813"
        );
    }
}
