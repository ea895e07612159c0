//! Flat INI-style run configuration: `key = value` lines under one
//! `[section]` per command. Command-line flags override file values.
//!
//! ```text
//! # comment
//! [train]
//! data = fixtures/dataset
//! variant = micronet-32
//! epochs = 50
//! ```

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct IniConfig {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl IniConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| Error::Format(format!("line {}: unterminated section header", lineno + 1)))?
                    .trim();
                if name.is_empty() {
                    return Err(Error::Format(format!("line {}: empty section name", lineno + 1)));
                }
                sections.entry(name.to_string()).or_default();
                current = Some(name.to_string());
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Format(format!("line {}: expected key = value, got {line:?}", lineno + 1))
            })?;
            let section = current
                .as_ref()
                .ok_or_else(|| Error::Format(format!("line {}: key outside any [section]", lineno + 1)))?;
            sections
                .get_mut(section)
                .unwrap()
                .insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(IniConfig { sections })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(|s| s.as_str())
    }

    /// Typed lookup; a present-but-unparseable value is a config error.
    pub fn get_parsed<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>> {
        match self.get(section, key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                Error::Config(format!("[{section}] {key} = {raw:?} cannot be parsed"))
            }),
        }
    }

    /// Rejects unknown keys in `section` so typos fail before any side effect.
    pub fn check_keys(&self, section: &str, allowed: &[&str]) -> Result<()> {
        if let Some(map) = self.sections.get(section) {
            for key in map.keys() {
                if !allowed.contains(&key.as_str()) {
                    return Err(Error::Config(format!(
                        "[{section}] unknown key {key:?} (allowed: {allowed:?})"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_keys_comments() {
        let ini = IniConfig::parse(
            "# top comment\n[train]\nepochs = 5\nlr = 0.01\n\n; other\n[eval]\ndata = /tmp/x\n",
        )
        .unwrap();
        assert_eq!(ini.get("train", "epochs"), Some("5"));
        assert_eq!(ini.get_parsed::<f32>("train", "lr").unwrap(), Some(0.01));
        assert_eq!(ini.get("eval", "data"), Some("/tmp/x"));
        assert_eq!(ini.get("train", "missing"), None);
    }

    #[test]
    fn key_outside_section_is_error() {
        assert!(IniConfig::parse("epochs = 5\n").is_err());
    }

    #[test]
    fn bad_value_is_config_error() {
        let ini = IniConfig::parse("[train]\nepochs = many\n").unwrap();
        assert!(matches!(
            ini.get_parsed::<usize>("train", "epochs"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let ini = IniConfig::parse("[train]\nepohcs = 5\n").unwrap();
        assert!(ini.check_keys("train", &["epochs", "lr"]).is_err());
        assert!(ini.check_keys("train", &["epohcs"]).is_ok());
    }
}
