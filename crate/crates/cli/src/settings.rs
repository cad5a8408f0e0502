//! Flat `key=value` config files merged under command-line flags.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use spde_core::{Error, Result};

/// Values read from a config file, keyed by long flag name.
#[derive(Debug, Default)]
pub struct FileSettings {
    values: BTreeMap<String, String>,
}

impl FileSettings {
    /// Parses `key = value` lines; `#` starts a comment, blank lines are skipped.
    /// Keys may use `-` or `_`.
    pub fn parse(text: &str, allowed: &[&str]) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("config line {}: expected key=value, got {raw:?}", n + 1)))?;
            let key = k.trim().replace('_', "-");
            if !allowed.contains(&key.as_str()) {
                return Err(Error::Config(format!(
                    "config line {}: unknown key {key:?} (allowed: {})",
                    n + 1,
                    allowed.join(", ")
                )));
            }
            if values.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(Error::Config(format!("config line {}: duplicate key {key:?}", n + 1)));
            }
        }
        Ok(FileSettings { values })
    }

    pub fn load(path: Option<&Path>, allowed: &[&str]) -> Result<Self> {
        match path {
            None => Ok(FileSettings::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("cannot read config file {}: {e}", p.display())))?;
                FileSettings::parse(&text, allowed)
            }
        }
    }

    /// Flag value if given, else the file value parsed as `T`.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| Error::Config(format!("config key {key}: cannot parse {v:?}: {e}"))),
        }
    }

    pub fn required<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.pick(flag, key)?.ok_or_else(|| Error::Config(format!("missing required value --{key}")))
    }
}

/// Comma-separated list or inclusive range `a..b`.
#[derive(Debug, Clone, PartialEq)]
pub struct List<T>(pub Vec<T>);

impl<T: FromStr> FromStr for List<T>
where
    T::Err: std::fmt::Display,
    T: TryFrom<u32>,
{
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        if let Some((a, b)) = s.split_once("..") {
            let a: u32 = a.trim().parse().map_err(|e| format!("bad range start {a:?}: {e}"))?;
            let b: u32 = b.trim().parse().map_err(|e| format!("bad range end {b:?}: {e}"))?;
            if a > b {
                return Err(format!("empty range {s:?}"));
            }
            return (a..=b).map(|v| T::try_from(v).map_err(|_| format!("{v} out of range"))).collect::<std::result::Result<_, _>>().map(List);
        }
        s.split(',')
            .map(|p| p.trim().parse::<T>().map_err(|e| format!("bad list entry {p:?}: {e}")))
            .collect::<std::result::Result<_, _>>()
            .map(List)
    }
}
