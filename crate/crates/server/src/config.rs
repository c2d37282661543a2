//! Flat `key = value` configuration files supplying defaults for CLI
//! options. Blank lines and lines starting with `#` are ignored.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("config line {line}: duplicate key {key:?}")]
    Duplicate { line: usize, key: String },
    #[error("config key {key:?}: cannot parse {value:?}")]
    Value { key: String, value: String },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(ConfigError::Syntax { line: i + 1 });
            }
            if values.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(ConfigError::Duplicate { line: i + 1, key: key.to_string() });
            }
        }
        Ok(Self { values })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// The parsed value for `key`, if present.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        self.raw(key)
            .map(|v| v.parse().map_err(|_| ConfigError::Value { key: key.to_string(), value: v.to_string() }))
            .transpose()
    }

    /// `flag` if given on the command line, else the config value, else
    /// `default`.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, ConfigError> {
        match flag {
            Some(v) => Ok(v),
            None => Ok(self.get(key)?.unwrap_or(default)),
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_pairs_and_skips_comments() {
        let c = Config::parse("# defaults\n\ndim = 50\nbind=0.0.0.0:9000\n").unwrap();
        assert_eq!(c.get::<usize>("dim").unwrap(), Some(50));
        assert_eq!(c.raw("bind"), Some("0.0.0.0:9000"));
        assert_eq!(c.get::<usize>("epochs").unwrap(), None);
    }

    #[test]
    fn flag_beats_config_beats_default() {
        let c = Config::parse("k = 5").unwrap();
        assert_eq!(c.pick(Some(3usize), "k", 10).unwrap(), 3);
        assert_eq!(c.pick(None, "k", 10usize).unwrap(), 5);
        assert_eq!(c.pick(None, "other", 10usize).unwrap(), 10);
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(matches!(Config::parse("a = 1\nnonsense"), Err(ConfigError::Syntax { line: 2 })));
        assert!(matches!(Config::parse("a = 1\na = 2"), Err(ConfigError::Duplicate { line: 2, .. })));
        assert!(matches!(Config::parse("k = ten").unwrap().get::<usize>("k"), Err(ConfigError::Value { .. })));
    }
}
