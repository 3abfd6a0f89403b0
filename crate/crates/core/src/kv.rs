//! Flat `key = value` text files used for run configs and simulation specs.
//!
//! Blank lines and `#` comments are ignored. Keys may repeat; list-valued
//! keys collect every occurrence in order, scalar lookups take the last.

use std::fmt::Display;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvFile {
    entries: Vec<(String, String, usize)>,
}

impl KvFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(i + 1, format!("expected key = value, got {line:?}")))?;
            let k = k.trim();
            if k.is_empty() || k.contains(char::is_whitespace) {
                return Err(Error::parse(i + 1, format!("bad key {k:?}")));
            }
            entries.push((k.to_string(), v.trim().to_string(), i + 1));
        }
        Ok(KvFile { entries })
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl Display) {
        self.entries.push((key.into(), value.to_string(), 0));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().rev().find(|e| e.0 == key).map(|e| e.1.as_str())
    }

    pub fn get_all(&self, key: &str) -> Vec<(&str, usize)> {
        self.entries.iter().filter(|e| e.0 == key).map(|e| (e.1.as_str(), e.2)).collect()
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        let Some((_, v, line)) = self.entries.iter().rev().find(|e| e.0 == key) else {
            return Ok(None);
        };
        v.parse().map(Some).map_err(|e| Error::parse(*line, format!("{key}: {e}")))
    }

    pub fn parsed_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    /// Fail on any key not in `known`.
    pub fn check_keys(&self, known: &[&str]) -> Result<()> {
        match self.entries.iter().find(|e| !known.contains(&e.0.as_str())) {
            Some((k, _, line)) => Err(Error::parse(*line, format!("unknown key {k:?}"))),
            None => Ok(()),
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.0.as_str())
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v, _)| format!("{k} = {v}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_lookup_and_repeat() {
        let kv = KvFile::parse("# header\nseed = 7\nplatform = 1,2\n\nplatform = 3,4 # trailing\nseed=9\n").unwrap();
        assert_eq!(kv.get("seed"), Some("9"));
        assert_eq!(kv.parsed::<u64>("seed").unwrap(), Some(9));
        assert_eq!(kv.get_all("platform").iter().map(|p| p.0).collect::<Vec<_>>(), vec!["1,2", "3,4"]);
        assert_eq!(kv.parsed_or("missing", 1.5).unwrap(), 1.5);
        assert!(kv.check_keys(&["seed"]).is_err());
        kv.check_keys(&["seed", "platform"]).unwrap();
    }

    #[test]
    fn errors_carry_line_numbers() {
        assert!(matches!(KvFile::parse("a = 1\nnot a pair\n"), Err(Error::Parse { line: 2, .. })));
        let kv = KvFile::parse("x = 1\nn = abc\n").unwrap();
        assert!(matches!(kv.parsed::<u32>("n"), Err(Error::Parse { line: 2, .. })));
    }
}
