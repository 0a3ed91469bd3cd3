//! Flat `key = value` configuration files and their merge with flags.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::CliError;

/// Keys accepted in configuration files, spelled like the long flags.
pub const KNOWN_KEYS: &[&str] = &[
    "preset",
    "samples",
    "k",
    "m",
    "n",
    "alpha",
    "b",
    "lambda1",
    "lambda2",
    "seed",
    "s",
    "tau",
    "rho",
    "nu",
    "pi",
    "gamma",
    "mu-bar",
    "max-it",
    "tol-scale",
    "t-max",
    "pivot-tol",
    "ls-zero-rel",
    "trace",
    "point",
    "trials",
    "sweep",
    "out",
    "big-m",
];

/// Parsed configuration file. Keys are normalised to hyphenated lower case.
#[derive(Debug, Default, Clone)]
pub struct ConfigFile {
    entries: BTreeMap<String, String>,
    source: Option<PathBuf>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        cfg.source = Some(path.to_path_buf());
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("line {}: expected key = value", idx + 1))
            })?;
            let key = key.trim().to_ascii_lowercase().replace('_', "-");
            let value = value.trim();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(CliError::Config(format!(
                    "line {}: unknown key `{key}`",
                    idx + 1
                )));
            }
            if value.is_empty() {
                return Err(CliError::Config(format!(
                    "line {}: empty value for `{key}`",
                    idx + 1
                )));
            }
            if entries.insert(key.clone(), value.to_string()).is_some() {
                return Err(CliError::Config(format!(
                    "line {}: duplicate key `{key}`",
                    idx + 1
                )));
            }
        }
        Ok(Self {
            entries,
            source: None,
        })
    }

    /// `flag` if given, else the file entry for `key` parsed as `T`.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.entries.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse().map(Some).map_err(|_| {
                let origin = self
                    .source
                    .as_ref()
                    .map_or_else(|| "config".to_string(), |p| p.display().to_string());
                CliError::Config(format!("{origin}: invalid value `{raw}` for `{key}`"))
            }),
        }
    }
}
