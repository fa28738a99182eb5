//! `key = value` text documents used for calibration, network, and
//! generator configuration files. `#` starts a comment; blank lines are
//! ignored; keys are unique.

use std::fmt::Display;
use std::str::FromStr;

use indexmap::IndexMap;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum KvError {
    #[error("line {line}: expected `key = value`, found {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: duplicate key {key:?}")]
    Duplicate { line: usize, key: String },
    #[error("missing key {0:?}")]
    Missing(String),
    #[error("key {key:?}: cannot parse {value:?}")]
    Value { key: String, value: String },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvDoc {
    entries: IndexMap<String, String>,
}

impl KvDoc {
    pub fn parse(text: &str) -> Result<Self, KvError> {
        let mut entries = IndexMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| KvError::Syntax { line: i + 1, text: raw.to_string() })?;
            let key = k.trim();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(KvError::Syntax { line: i + 1, text: raw.to_string() });
            }
            if entries.insert(key.to_string(), v.trim().to_string()).is_some() {
                return Err(KvError::Duplicate { line: i + 1, key: key.to_string() });
            }
        }
        Ok(Self { entries })
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl Display) {
        self.entries.insert(key.into(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str, KvError> {
        self.get(key).ok_or_else(|| KvError::Missing(key.to_string()))
    }

    pub fn parse_value<T: FromStr>(&self, key: &str) -> Result<Option<T>, KvError> {
        self.get(key)
            .map(|v| v.parse().map_err(|_| KvError::Value { key: key.to_string(), value: v.to_string() }))
            .transpose()
    }

    /// Whitespace- or comma-separated list of numbers.
    pub fn numbers<T: FromStr>(&self, key: &str) -> Result<Vec<T>, KvError> {
        let v = self.require(key)?;
        v.split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| KvError::Value { key: key.to_string(), value: v.to_string() }))
            .collect()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
