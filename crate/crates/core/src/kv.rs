//! Flat `key = value` text configuration.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Parsed `key = value` lines in file order; `#` starts a comment line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvFile {
    entries: BTreeMap<String, String>,
}

impl KvFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(i + 1, format!("expected `key = value`, got `{line}`")))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::parse(i + 1, "empty key"));
            }
            if entries.insert(k.to_string(), v.trim().to_string()).is_some() {
                return Err(Error::parse(i + 1, format!("duplicate key `{k}`")));
            }
        }
        Ok(KvFile { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), value.into());
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Comma-separated list value, items trimmed, empties dropped.
    pub fn list(&self, key: &str) -> Option<Vec<String>> {
        self.get(key).map(|v| {
            v.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect()
        })
    }

    pub fn parsed<V: std::str::FromStr>(&self, key: &str) -> Result<Option<V>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::config(format!("bad value for `{key}`: `{v}`"))),
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_lists_and_comments() {
        let kv = KvFile::parse("# lexicon\nurgent = a b, c ,\n seed=4\n").unwrap();
        assert_eq!(kv.list("urgent").unwrap(), vec!["a b", "c"]);
        assert_eq!(kv.parsed::<u64>("seed").unwrap(), Some(4));
    }

    #[test]
    fn rejects_lines_without_equals() {
        assert!(matches!(KvFile::parse("x\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn render_round_trips() {
        let kv = KvFile::parse("b = 2\na = x, y\n").unwrap();
        assert_eq!(KvFile::parse(&kv.render()).unwrap(), kv);
    }
}
