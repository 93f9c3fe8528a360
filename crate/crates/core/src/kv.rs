//! Flat `key=value` text files with `#` comments.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Kv {
    map: BTreeMap<String, String>,
}

impl Kv {
    pub fn new() -> Self {
        Kv::default()
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    msg: "expected key=value".into(),
                });
            };
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    msg: "empty key".into(),
                });
            }
            if map.insert(k.to_string(), v.trim().to_string()).is_some() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    msg: format!("duplicate key {k}"),
                });
            }
        }
        Ok(Kv { map })
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::Missing(path.to_path_buf()));
        }
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Kv::parse(&text, path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// Sorted `key=value` lines.
    pub fn to_text(&self) -> String {
        self.map.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.map.insert(key.to_string(), value.to_string());
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.map.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(String::as_str)
    }

    /// Typed lookup falling back to `default` when the key is absent.
    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.map.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("bad value {v:?} for {key}"))),
        }
    }

    /// Overrides entries of `self` with those of `other`.
    pub fn merge(&mut self, other: &Kv) {
        for (k, v) in &other.map {
            self.map.insert(k.clone(), v.clone());
        }
    }

    /// Errors on keys not present in `known`.
    pub fn check_known(&self, known: &Kv) -> Result<()> {
        match self.map.keys().find(|k| !known.map.contains_key(*k)) {
            Some(k) => Err(Error::Config(format!("unknown config key {k}"))),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_print() {
        let kv = Kv::parse("# c\nb = 2\na=x y\n\n", Path::new("c")).unwrap();
        assert_eq!(kv.get_str("a"), Some("x y"));
        assert_eq!(kv.get_or("b", 0usize).unwrap(), 2);
        assert_eq!(kv.get_or("c", 5usize).unwrap(), 5);
        assert!(kv.get_or::<usize>("a", 0).is_err());
        assert_eq!(kv.to_text(), "a=x y\nb=2\n");
        assert_eq!(Kv::parse(&kv.to_text(), Path::new("c")).unwrap(), kv);
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(Kv::parse("novalue\n", Path::new("c")).is_err());
        assert!(Kv::parse("a=1\na=2\n", Path::new("c")).is_err());
    }
}
