//! Flat key=value configuration files with [section] headers.
//!
//! Example:
//! ```text
//! [experiment]
//! dataset = synth-gray-16x16
//! task = random-inpaint
//! seeds = 1,2,3
//!
//! [solver]
//! iterations = 100
//! step_size = 0.3
//! projection = on
//! ```
//!
//! '#' starts a comment. Keys are addressed as "section.key". Values are
//! plain strings; typed getters do the parsing and name the offending key
//! on failure.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct ConfigMap {
    values: BTreeMap<String, String>,
}

impl ConfigMap {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') {
                if !line.ends_with(']') || line.len() < 3 {
                    return Err(Error::Config(format!(
                        "line {}: malformed section header '{line}'",
                        lineno + 1
                    )));
                }
                section = line[1..line.len() - 1].trim().to_string();
                continue;
            }
            let Some(eq) = line.find('=') else {
                return Err(Error::Config(format!(
                    "line {}: expected 'key = value', got '{line}'",
                    lineno + 1
                )));
            };
            let key = line[..eq].trim();
            let value = line[eq + 1..].trim();
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
            }
            let full = if section.is_empty() {
                key.to_string()
            } else {
                format!("{section}.{key}")
            };
            values.insert(full, value.to_string());
        }
        Ok(ConfigMap { values })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::Config(format!("missing required config key '{key}'")))
    }

    pub fn get_or<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.get(key).unwrap_or(default)
    }

    pub fn get_usize(&self, key: &str, default: usize) -> Result<usize> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("key '{key}': '{v}' is not an integer"))),
        }
    }

    pub fn get_f64(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("key '{key}': '{v}' is not a number"))),
        }
    }

    pub fn get_bool(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => parse_bool(v)
                .ok_or_else(|| Error::Config(format!("key '{key}': '{v}' is not on/off"))),
        }
    }

    pub fn get_list<T, F>(&self, key: &str, parse: F) -> Result<Option<Vec<T>>>
    where
        F: Fn(&str) -> Option<T>,
    {
        let Some(v) = self.get(key) else { return Ok(None) };
        let mut out = Vec::new();
        for item in v.split(',') {
            let item = item.trim();
            if item.is_empty() {
                continue;
            }
            out.push(parse(item).ok_or_else(|| {
                Error::Config(format!("key '{key}': cannot parse list item '{item}'"))
            })?);
        }
        if out.is_empty() {
            return Err(Error::Config(format!("key '{key}': empty list")));
        }
        Ok(Some(out))
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(|s| s.as_str())
    }
}

pub fn parse_bool(v: &str) -> Option<bool> {
    match v {
        "on" | "true" | "yes" | "1" => Some(true),
        "off" | "false" | "no" | "0" => Some(false),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_comments_and_lists() {
        let text = "\n# top comment\n[experiment]\ndataset = two-moons-2d # trailing\nseeds = 1, 2,3\n\n[solver]\nstep_size = 0.25\nprojection = on\n";
        let cfg = ConfigMap::parse(text).unwrap();
        assert_eq!(cfg.get("experiment.dataset"), Some("two-moons-2d"));
        assert_eq!(
            cfg.get_list("experiment.seeds", |s| s.parse::<u64>().ok())
                .unwrap()
                .unwrap(),
            vec![1, 2, 3]
        );
        assert_eq!(cfg.get_f64("solver.step_size", 0.0).unwrap(), 0.25);
        assert!(cfg.get_bool("solver.projection", false).unwrap());
        assert_eq!(cfg.get_usize("solver.iterations", 100).unwrap(), 100);
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(ConfigMap::parse("[unclosed\n").is_err());
        assert!(ConfigMap::parse("no equals here\n").is_err());
        assert!(ConfigMap::parse("= value\n").is_err());
    }

    #[test]
    fn typed_errors_name_the_key() {
        let cfg = ConfigMap::parse("[s]\nx = abc\n").unwrap();
        let err = cfg.get_f64("s.x", 0.0).unwrap_err();
        assert!(err.to_string().contains("s.x"));
    }
}
