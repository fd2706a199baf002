//! A small line-oriented `key = value` format with optional `[section]`
//! headers, used for metadata sidecars, synthetic-data specs and plans.
//!
//! ```text
//! # comment
//! [plan]
//! seed = 7
//! spec = benchmark
//! spec = svd industry Big9     # keys may repeat; order is kept
//! ```

use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub section: String,
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvConfig {
    entries: Vec<Entry>,
}

impl KvConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut section = String::new();
        let mut entries = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| Error::ConfigSyntax {
                    line: line_no,
                    message: format!("unterminated section header {line:?}"),
                })?;
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::ConfigSyntax {
                line: line_no,
                message: format!("expected `key = value`, found {line:?}"),
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::ConfigSyntax {
                    line: line_no,
                    message: "empty key".into(),
                });
            }
            entries.push(Entry {
                section: section.clone(),
                key: key.to_string(),
                value: value.trim().to_string(),
                line: line_no,
            });
        }
        Ok(KvConfig { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn section<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a Entry> + 'a {
        self.entries.iter().filter(move |e| e.section == name)
    }

    /// Last value for `key` in `section`.
    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .rev()
            .find(|e| e.section == section && e.key == key)
            .map(|e| e.value.as_str())
    }

    pub fn get_all<'a>(&'a self, section: &'a str, key: &'a str) -> impl Iterator<Item = &'a Entry> {
        self.section(section).filter(move |e| e.key == key)
    }

    pub fn require(&self, section: &str, key: &str) -> Result<&str> {
        self.get(section, key)
            .ok_or_else(|| Error::Config(format!("missing `{key}` in [{section}]")))
    }

    pub fn parse_opt<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>> {
        match self.get(section, key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("[{section}] {key}: cannot parse {v:?}"))),
        }
    }

    pub fn parse_or<T: FromStr>(&self, section: &str, key: &str, default: T) -> Result<T> {
        Ok(self.parse_opt(section, key)?.unwrap_or(default))
    }

    pub fn parse_list<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<Vec<T>>> {
        match self.get(section, key) {
            None => Ok(None),
            Some(v) => split_list(v)
                .map(|item| {
                    item.parse()
                        .map_err(|_| Error::Config(format!("[{section}] {key}: cannot parse list item {item:?}")))
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

/// Splits a comma- or whitespace-separated list.
pub fn split_list(s: &str) -> impl Iterator<Item = &str> {
    s.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_repeats() {
        let cfg =
            KvConfig::parse("top = 1\n[plan]\n# note\nseed = 7 # trailing\nspec = a\nspec = b c\n\n[mcmc]\nburn=10\n")
                .unwrap();
        assert_eq!(cfg.get("", "top"), Some("1"));
        assert_eq!(cfg.parse_opt::<u64>("plan", "seed").unwrap(), Some(7));
        let specs: Vec<_> = cfg.get_all("plan", "spec").map(|e| e.value.as_str()).collect();
        assert_eq!(specs, ["a", "b c"]);
        assert_eq!(cfg.parse_or("mcmc", "burn", 0usize).unwrap(), 10);
        assert_eq!(cfg.parse_or("mcmc", "retain", 5usize).unwrap(), 5);
    }

    #[test]
    fn syntax_errors_carry_line() {
        match KvConfig::parse("a = 1\nnot a pair\n") {
            Err(Error::ConfigSyntax { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(KvConfig::parse("[open\n").is_err());
    }

    #[test]
    fn lists() {
        let cfg = KvConfig::parse("h = 1, 3\n").unwrap();
        assert_eq!(cfg.parse_list::<u32>("", "h").unwrap(), Some(vec![1, 3]));
        assert!(KvConfig::parse("h = 1, x\n")
            .unwrap()
            .parse_list::<u32>("", "h")
            .is_err());
    }
}
