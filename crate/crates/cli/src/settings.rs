//! Optional `key = value` config file. Keys are the long flag names
//! (`subshot-len`, `learning-rate`, ...; underscores work too). Blank lines
//! and lines starting with `#` are skipped. A flag given on the command line
//! always wins over the file.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::failure::Failure;

pub const KEYS: &[&str] = &[
    "seed",
    "workers",
    "variant",
    "subshot-len",
    "stride",
    "hidden1",
    "hidden2",
    "flat-steps",
    "masked",
    "max-frames",
    "learning-rate",
    "epochs",
    "init-scale",
    "grad-clip",
    "shuffle",
    "budget",
    "threshold",
    "split",
];

#[derive(Debug, Default)]
pub struct FileConfig {
    origin: String,
    values: BTreeMap<String, String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::usage(format!("config file {}: {e}", path.display())))?;
        Self::parse(&path.display().to_string(), &text)
    }

    pub fn parse(origin: &str, text: &str) -> Result<Self, Failure> {
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Failure::usage(format!(
                    "{origin}:{}: expected key = value, got `{line}`",
                    n + 1
                )));
            };
            let key = k.trim().replace('_', "-");
            if !KEYS.contains(&key.as_str()) {
                return Err(Failure::usage(format!(
                    "{origin}:{}: unknown key `{}`",
                    n + 1,
                    k.trim()
                )));
            }
            if values.insert(key, v.trim().to_string()).is_some() {
                return Err(Failure::usage(format!(
                    "{origin}:{}: duplicate key `{}`",
                    n + 1,
                    k.trim()
                )));
            }
        }
        Ok(FileConfig {
            origin: origin.to_string(),
            values,
        })
    }

    pub fn get<T>(&self, key: &str) -> Result<Option<T>, Failure>
    where
        T: FromStr,
        T::Err: Display,
    {
        debug_assert!(KEYS.contains(&key), "{key}");
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| Failure::usage(format!("{}: `{key} = {v}`: {e}", self.origin))),
        }
    }

    /// Flag, else file, else `default`.
    pub fn pick<T>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, Failure>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.pick_opt(flag, key)?.unwrap_or(default))
    }

    pub fn pick_opt<T>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, Failure>
    where
        T: FromStr,
        T::Err: Display,
    {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.get(key),
        }
    }

    /// A `--flag` switch: set on the command line, or `key = true` in the file.
    pub fn switch(&self, flag: bool, key: &str) -> Result<bool, Failure> {
        Ok(flag || self.get::<bool>(key)?.unwrap_or(false))
    }
}
