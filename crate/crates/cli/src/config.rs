//! Flat `key=value` settings: config file first, command-line flags on top.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

/// Every key a config file may set. Flags use the same names with `-` for
/// `_`.
pub const KNOWN_KEYS: &[&str] = &[
    "in",
    "out",
    "seed",
    "split",
    "category",
    "mode",
    "variant",
    "embeddings",
    "model",
    "tau",
    "k",
    "lexicons",
    "cure_lexicon",
    "misinfo_keywords",
    "predicted",
    "features",
    "epochs",
    "batch_size",
    "learning_rate",
    "patience",
    "hidden",
    "dim",
    "window",
    "negatives",
    "min_count",
    "keep_hashtag_mark",
];

/// An invocation problem (exit code 1) as opposed to a data problem.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn parse_config(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            usage(format!("{}:{}: expected key=value", path.display(), i + 1))
        })?;
        let key = k.trim().replace('-', "_");
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(usage(format!("{}:{}: unknown key {key:?}", path.display(), i + 1)));
        }
        out.insert(key, v.trim().to_owned());
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct Settings {
    command: String,
    values: BTreeMap<String, String>,
}

impl Settings {
    /// Keeps the config-file entries among `flags`' keys, then applies the
    /// flags that were given.
    pub fn load(
        command: &str,
        config: Option<&Path>,
        flags: Vec<(&'static str, Option<String>)>,
    ) -> Result<Self> {
        let file = match config {
            Some(p) => parse_config(p)?,
            None => BTreeMap::new(),
        };
        let mut values = BTreeMap::new();
        for (key, flag) in flags {
            if let Some(v) = flag.or_else(|| file.get(key).cloned()) {
                values.insert(key.to_owned(), v);
            }
        }
        Ok(Self {
            command: command.to_owned(),
            values,
        })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| usage(format!("missing --{}", key.replace('_', "-"))))
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| usage(format!("bad value {v:?} for {key}: {e}")))
            })
            .transpose()
    }

    pub fn parse_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        Ok(self.parse(key)?.unwrap_or(default))
    }

    /// Comma-separated values, empty entries dropped.
    pub fn list(&self, key: &str) -> Vec<String> {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::to_owned)
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn seed(&self) -> Result<u64> {
        self.parse_or("seed", 0)
    }

    /// SHA-256 over the command name and the effective settings, leaving
    /// out the output path.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!("command={}\n", self.command));
        for (k, v) in self.values.iter().filter(|(k, _)| k.as_str() != "out") {
            h.update(format!("{k}={v}\n"));
        }
        format!("{:x}", h.finalize())
    }
}

pub fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}
