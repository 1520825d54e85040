//! Flat `key = value` configuration files.
//!
//! One entry per line; `#` starts a comment; blank lines are ignored.
//! Duplicate keys, missing `=` and unknown keys are errors carrying the line
//! number.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvConfig {
    /// key → (1-based line, raw value)
    entries: BTreeMap<String, (usize, String)>,
}

impl KvConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (k, v) = content.split_once('=').ok_or_else(|| Error::Config {
                line,
                msg: format!("expected `key = value`, found `{content}`"),
            })?;
            let key = k.trim().to_string();
            if key.is_empty() {
                return Err(Error::Config {
                    line,
                    msg: "empty key".into(),
                });
            }
            if let Some((first, _)) = entries.get(&key) {
                return Err(Error::Config {
                    line,
                    msg: format!("key `{key}` already set on line {first}"),
                });
            }
            entries.insert(key, (line, v.trim().to_string()));
        }
        Ok(KvConfig { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Sets or replaces a value (used for command-line overrides; line 0).
    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), (0, value.to_string()));
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn line_of(&self, key: &str) -> usize {
        self.entries.get(key).map_or(0, |e| e.0)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.1.as_str())
    }

    /// Parses `key` if present.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some((line, v)) => v.parse::<T>().map(Some).map_err(|_| Error::Config {
                line: *line,
                msg: format!("cannot parse `{v}` for `{key}`"),
            }),
        }
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?.ok_or_else(|| Error::MissingKey(key.to_string()))
    }

    /// Overwrites `slot` when `key` is present.
    pub fn read_into<T: FromStr>(&self, key: &str, slot: &mut T) -> Result<()> {
        if let Some(v) = self.get(key)? {
            *slot = v;
        }
        Ok(())
    }

    /// Fails on the first key for which `known` returns false.
    pub fn reject_unknown(&self, known: impl Fn(&str) -> bool) -> Result<()> {
        match self.entries.iter().find(|(k, _)| !known(k)) {
            Some((k, (line, _))) => Err(Error::Config {
                line: *line,
                msg: format!("unknown key `{k}`"),
            }),
            None => Ok(()),
        }
    }

    /// A config error attributed to the line that set `key`.
    pub fn error_at(&self, key: &str, msg: impl Into<String>) -> Error {
        Error::Config {
            line: self.line_of(key),
            msg: format!("`{key}`: {}", msg.into()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_values() {
        let c = KvConfig::parse("# header\nseed = 7\n\nrate=0.5 # trailing\n").unwrap();
        assert_eq!(c.require::<u64>("seed").unwrap(), 7);
        assert_eq!(c.get::<f64>("rate").unwrap(), Some(0.5));
        assert_eq!(c.line_of("rate"), 4);
        assert_eq!(c.get::<f64>("missing").unwrap(), None);
    }

    #[test]
    fn errors_carry_lines() {
        let e = KvConfig::parse("a = 1\nnonsense\n").unwrap_err();
        assert!(matches!(e, Error::Config { line: 2, .. }));
        let e = KvConfig::parse("a = 1\na = 2\n").unwrap_err();
        assert!(matches!(e, Error::Config { line: 2, .. }));
        let c = KvConfig::parse("a = x\n").unwrap();
        assert!(matches!(c.get::<f64>("a"), Err(Error::Config { line: 1, .. })));
        let e = c.require::<u64>("seed").unwrap_err();
        assert!(matches!(&e, Error::MissingKey(k) if k == "seed"));
        assert!(e.is_usage());
        assert!(matches!(c.reject_unknown(|k| k == "b"), Err(Error::Config { line: 1, .. })));
    }
}
