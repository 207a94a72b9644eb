//! Option resolution: command-line flag, then config file, then default.
//!
//! Config files are line-oriented `key = value`; `#` starts a comment. Keys
//! use the long flag names without dashes. Every resolved value is recorded
//! so it can be echoed into output headers.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context, Result};

use crate::UsageError;

pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!(UsageError(format!("config line {}: expected `key = value`", i + 1)));
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            bail!(UsageError(format!("config line {}: empty key", i + 1)));
        }
        if map.insert(k.to_string(), v.to_string()).is_some() {
            bail!(UsageError(format!("config line {}: duplicate key `{k}`", i + 1)));
        }
    }
    Ok(map)
}

#[derive(Debug, Default)]
pub struct Resolver {
    file: BTreeMap<String, String>,
    effective: RefCell<Vec<(String, String)>>,
}

impl Resolver {
    pub fn new(file: BTreeMap<String, String>) -> Self {
        Self {
            file,
            effective: RefCell::default(),
        }
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        Ok(Self::new(parse_config(&text).with_context(|| format!("in {}", path.display()))?))
    }

    pub fn has_file_key(&self, key: &str) -> bool {
        self.file.contains_key(key)
    }

    fn record(&self, key: &str, value: String) {
        self.effective.borrow_mut().push((key.to_string(), value));
    }

    fn from_file<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        match self.file.get(key) {
            None => Ok(None),
            Some(s) => s
                .parse::<T>()
                .map(Some)
                .map_err(|e| UsageError(format!("config key `{key}`: {e}")).into()),
        }
    }

    /// Flag, else file, else `default`.
    pub fn get<T>(&self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let v = match flag {
            Some(v) => v,
            None => self.from_file(key)?.unwrap_or(default),
        };
        self.record(key, v.to_string());
        Ok(v)
    }

    /// Like [`get`](Self::get) without a default; unset values are echoed as `-`.
    pub fn get_opt<T>(&self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let v = match flag {
            Some(v) => Some(v),
            None => self.from_file(key)?,
        };
        self.record(key, v.as_ref().map_or_else(|| "-".to_string(), |v| v.to_string()));
        Ok(v)
    }

    /// A presence flag: set on the command line, or `true` in the file.
    pub fn switch(&self, key: &str, flag: bool) -> Result<bool> {
        let v = flag || self.from_file::<bool>(key)?.unwrap_or(false);
        self.record(key, v.to_string());
        Ok(v)
    }

    /// Rejects file keys no option asked for.
    pub fn finish(&self) -> Result<()> {
        let eff = self.effective.borrow();
        let unknown: Vec<&str> = self
            .file
            .keys()
            .filter(|k| !eff.iter().any(|(e, _)| e == *k))
            .map(String::as_str)
            .collect();
        if !unknown.is_empty() {
            bail!(UsageError(format!("unknown config key(s): {}", unknown.join(", "))));
        }
        Ok(())
    }

    /// `key=value; key=value` in resolution order.
    pub fn summary(&self) -> String {
        self.effective
            .borrow()
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join("; ")
    }
}
