//! Flat `key = value` text configuration.
//!
//! One entry per line, `#` starts a comment, blank lines are ignored.
//! Keys may repeat only when the caller merges several documents; within a
//! single document the last occurrence wins.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum KvError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("key `{key}`: cannot parse {value:?}")]
    Value { key: String, value: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("missing key `{0}`")]
    Missing(String),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvMap {
    entries: BTreeMap<String, String>,
}

impl KvMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self, KvError> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| KvError::Syntax {
                line: idx + 1,
                text: raw.to_string(),
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(KvError::Syntax {
                    line: idx + 1,
                    text: raw.to_string(),
                });
            }
            entries.insert(key.to_string(), value.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, KvError> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => v.parse::<T>().map(Some).map_err(|_| KvError::Value {
                key: key.to_string(),
                value: v.clone(),
            }),
        }
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T, KvError> {
        self.get(key)?
            .ok_or_else(|| KvError::Missing(key.to_string()))
    }

    /// Overwrite `target` with the parsed value if `key` is present.
    pub fn update<T: FromStr>(&self, key: &str, target: &mut T) -> Result<(), KvError> {
        if let Some(v) = self.get(key)? {
            *target = v;
        }
        Ok(())
    }

    /// Entries under `prefix.`, with the prefix stripped.
    pub fn section(&self, prefix: &str) -> KvMap {
        let lead = format!("{prefix}.");
        let entries = self
            .entries
            .iter()
            .filter_map(|(k, v)| k.strip_prefix(&lead).map(|s| (s.to_string(), v.clone())))
            .collect();
        KvMap { entries }
    }

    /// Insert every entry of `other` under `prefix.`.
    pub fn extend_section(&mut self, prefix: &str, other: &KvMap) {
        for (k, v) in &other.entries {
            self.entries.insert(format!("{prefix}.{k}"), v.clone());
        }
    }

    pub fn merge(&mut self, other: &KvMap) {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
    }

    /// Reject any key outside `allowed`.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<(), KvError> {
        for k in self.entries.keys() {
            if !allowed.contains(&k.as_str()) {
                return Err(KvError::UnknownKey(k.clone()));
            }
        }
        Ok(())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

/// Format a float so that parsing it back yields the identical value.
pub fn float(v: f64) -> String {
    format!("{v:?}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_whitespace() {
        let kv = KvMap::parse("# header\n grid_size = 256 \n\nseed=7 # trailing\n").unwrap();
        assert_eq!(kv.require::<usize>("grid_size").unwrap(), 256);
        assert_eq!(kv.require::<u64>("seed").unwrap(), 7);
    }

    #[test]
    fn rejects_lines_without_equals() {
        let err = KvMap::parse("a = 1\nnonsense\n").unwrap_err();
        assert_eq!(
            err,
            KvError::Syntax {
                line: 2,
                text: "nonsense".into()
            }
        );
    }

    #[test]
    fn sections_round_trip() {
        let mut inner = KvMap::new();
        inner.set("step", 16);
        let mut outer = KvMap::new();
        outer.extend_section("depth", &inner);
        let text = outer.to_text();
        let back = KvMap::parse(&text).unwrap();
        assert_eq!(back.section("depth"), inner);
    }

    #[test]
    fn float_formatting_is_exact() {
        for v in [0.1, 1.0 / 3.0, 632.8, -1e-300, 17.9] {
            let s = float(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }
}
