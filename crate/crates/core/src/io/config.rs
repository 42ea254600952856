use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::str::FromStr;
use std::sync::Mutex;

use crate::error::{Error, Result};

/// Flat `key = value` configuration. Keys carry section prefixes
/// (`boost.occ.n_trees`); `#` starts a comment; blank lines are ignored.
/// Every key read through the typed getters is marked as used so that
/// leftovers can be reported as unknown.
#[derive(Debug, Default)]
pub struct FlatConfig {
    entries: BTreeMap<String, (String, usize)>,
    used: Mutex<BTreeSet<String>>,
}

impl FlatConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Config(format!("line {line_no}: expected key = value, got {raw:?}")));
            };
            let key = k.trim().to_string();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(Error::Config(format!("line {line_no}: invalid key {k:?}")));
            }
            if let Some((_, first)) = entries.insert(key.clone(), (v.trim().to_string(), line_no)) {
                return Err(Error::Config(format!("line {line_no}: key {key} already set on line {first}")));
            }
        }
        Ok(Self { entries, used: Mutex::new(BTreeSet::new()) })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    fn raw(&self, key: &str) -> Option<&(String, usize)> {
        let v = self.entries.get(key);
        if v.is_some() {
            self.used.lock().expect("config lock").insert(key.to_string());
        }
        v
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.raw(key).map(|(v, _)| v.as_str())
    }

    pub fn require_str(&self, key: &str) -> Result<&str> {
        self.get_str(key).ok_or_else(|| Error::Config(format!("missing required key {key}")))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some((v, line)) => {
                v.parse::<T>().map(Some).map_err(|_| Error::Config(format!("line {line}: cannot parse {key} = {v:?}")))
            }
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?.ok_or_else(|| Error::Config(format!("missing required key {key}")))
    }

    /// Comma-separated list; an absent key gives `None`.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        match self.raw(key) {
            None => Ok(None),
            Some((v, line)) => v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse::<T>().map_err(|_| Error::Config(format!("line {line}: bad list item {s:?} in {key}")))
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    /// Keys that no getter has read.
    pub fn unused_keys(&self) -> Vec<String> {
        let used = self.used.lock().expect("config lock");
        self.entries.keys().filter(|k| !used.contains(*k)).cloned().collect()
    }

    pub fn reject_unknown(&self) -> Result<()> {
        let unused = self.unused_keys();
        if unused.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!("unknown configuration keys: {}", unused.join(", "))))
        }
    }
}
