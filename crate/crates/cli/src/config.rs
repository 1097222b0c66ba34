//! Flat `key = value` run configuration. Command-line flags override file values.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context, Result};

/// Every key a configuration file may set.
pub const KNOWN_KEYS: &[&str] = &[
    "audio_dir",
    "transcripts",
    "emissions_dir",
    "segments_dir",
    "results_dir",
    "frames",
    "refine",
    "alpha",
    "beta",
    "delta_s",
    "win_s",
    "hop_s",
    "normalize",
    "parallel",
    "method",
    "budget_multiplier",
    "seed",
    "mode",
    "evaluator_cmd",
    "evaluator_tcp",
    "in_flight",
    "test_alpha",
    "comparisons",
    "entropy_norm",
    "grid",
];

#[derive(Debug, Clone, Default)]
pub struct FileConfig {
    values: BTreeMap<String, String>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                Self::parse(&text).with_context(|| format!("in config {}", p.display()))
            }
        }
    }

    /// Blank lines and `#` comments are ignored; unknown or repeated keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("line {}: expected `key = value`", i + 1);
            };
            let key = key.trim();
            if !KNOWN_KEYS.contains(&key) {
                bail!("line {}: unknown key {key:?}", i + 1);
            }
            if values.insert(key.to_string(), value.trim().to_string()).is_some() {
                bail!("line {}: key {key:?} set twice", i + 1);
            }
        }
        Ok(Self { values })
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        debug_assert!(KNOWN_KEYS.contains(&key), "{key} is not a known key");
        self.values
            .get(key)
            .map(|v| v.parse::<T>().map_err(|e| anyhow::anyhow!("config key {key}: bad value {v:?}: {e}")))
            .transpose()
    }

    /// The flag if given, else the file value.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.get(key),
        }
    }

    pub fn pick_or<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        Ok(self.pick(flag, key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<T>
    where
        T::Err: Display,
    {
        self.pick(flag, key)?
            .with_context(|| format!("missing --{} (or `{key}` in the config file)", key.replace('_', "-")))
    }

    /// A switch set on the command line, or `true` in the file.
    pub fn switch(&self, flag: bool, key: &str) -> Result<bool> {
        Ok(flag || self.get::<bool>(key)?.unwrap_or(false))
    }

    /// A feature on by default, turned off by a `--no-...` flag or `false` in the file.
    pub fn enabled(&self, disable_flag: bool, key: &str) -> Result<bool> {
        Ok(!disable_flag && self.get::<bool>(key)?.unwrap_or(true))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_overrides() {
        let cfg = FileConfig::parse("# run\nseed = 7\n\nmode = SM2S\nbudget_multiplier=3.5\n").unwrap();
        assert_eq!(cfg.get::<u64>("seed").unwrap(), Some(7));
        assert_eq!(cfg.pick(Some(9u64), "seed").unwrap(), Some(9));
        assert_eq!(cfg.require::<String>(None, "mode").unwrap(), "SM2S");
        assert_eq!(cfg.pick_or(None, "budget_multiplier", 3.0).unwrap(), 3.5);
        assert_eq!(cfg.pick_or(None, "grid", 101usize).unwrap(), 101);
    }

    #[test]
    fn rejects_unknown_repeated_and_malformed() {
        assert!(FileConfig::parse("sede = 1").is_err());
        assert!(FileConfig::parse("seed = 1\nseed = 2").is_err());
        assert!(FileConfig::parse("seed").is_err());
        let cfg = FileConfig::parse("seed = x").unwrap();
        assert!(cfg.get::<u64>("seed").is_err());
    }

    #[test]
    fn missing_required_key_names_the_flag() {
        let err = FileConfig::default().require::<String>(None, "audio_dir").unwrap_err();
        assert!(err.to_string().contains("--audio-dir"));
    }

    #[test]
    fn switches_combine_flag_and_file() {
        let cfg = FileConfig::parse("parallel = true").unwrap();
        assert!(cfg.switch(false, "parallel").unwrap());
        assert!(!FileConfig::default().switch(false, "parallel").unwrap());
        let off = FileConfig::parse("refine = false").unwrap();
        assert!(!off.enabled(false, "refine").unwrap());
        assert!(!FileConfig::default().enabled(true, "refine").unwrap());
        assert!(FileConfig::default().enabled(false, "refine").unwrap());
    }
}
