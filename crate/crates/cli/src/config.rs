//! Flag-over-file option resolution.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;

/// Keys from an optional TOML file; flags take precedence over them.
pub struct FileConfig {
    table: toml::Table,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                text.parse::<toml::Table>().with_context(|| format!("parsing {}", p.display()))?
            }
            None => toml::Table::new(),
        };
        Ok(Self { table })
    }

    /// Rejects keys outside `allowed`.
    pub fn only(&self, allowed: &[&str]) -> Result<()> {
        for k in self.table.keys() {
            if !allowed.contains(&k.as_str()) {
                bail!("unknown config key {k:?}; expected one of {allowed:?}");
            }
        }
        Ok(())
    }

    pub fn get<T: DeserializeOwned>(&self, flag: Option<T>, key: &str) -> Result<Option<T>> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.table.get(key) {
            Some(v) => Ok(Some(v.clone().try_into().with_context(|| format!("config key {key:?}"))?)),
            None => Ok(None),
        }
    }

    pub fn or<T: DeserializeOwned>(&self, flag: Option<T>, key: &str, default: T) -> Result<T> {
        Ok(self.get(flag, key)?.unwrap_or(default))
    }

    pub fn require<T: DeserializeOwned>(&self, flag: Option<T>, key: &str) -> Result<T> {
        match self.get(flag, key)? {
            Some(v) => Ok(v),
            None => bail!("missing required option {key:?} (flag or config key)"),
        }
    }
}

/// `a,b,c` or `lo:hi:n` (log-spaced, inclusive).
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() == 3 {
        let lo: f64 = parts[0].trim().parse()?;
        let hi: f64 = parts[1].trim().parse()?;
        let n: usize = parts[2].trim().parse()?;
        if !(lo > 0.0 && hi > lo && n >= 2) {
            bail!("log grid needs 0 < lo < hi and n >= 2, got {spec:?}");
        }
        let (a, b) = (lo.ln(), hi.ln());
        return Ok((0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect());
    }
    spec.split(',').map(|s| s.trim().parse::<f64>().with_context(|| format!("bad grid {spec:?}"))).collect()
}
