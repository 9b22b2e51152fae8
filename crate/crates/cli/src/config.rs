//! Flat key=value config files with optional [section] headers, plus the
//! resolved-snapshot writer. Flags override file values; file values
//! override defaults.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use mope_core::{MopeError, Result};

/// Parsed config file: section headers are cosmetic, keys are global.
#[derive(Debug, Clone, Default)]
pub struct FileConfig {
    values: BTreeMap<String, String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<FileConfig> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<FileConfig> {
        let mut values = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line.starts_with('[') && line.ends_with(']') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                MopeError::Parse(format!("config line {}: expected key=value", lineno + 1))
            })?;
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(FileConfig { values })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }
}

/// The fully resolved settings a command runs with. Recorded next to the
/// command's outputs so every run is reproducible from its snapshot.
#[derive(Debug, Clone, Default)]
pub struct Resolved {
    values: BTreeMap<String, String>,
}

impl Resolved {
    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.values.insert(key.to_string(), value.to_string());
    }

    pub fn snapshot(&self, out_dir: &Path) -> Result<()> {
        let mut text = String::new();
        for (k, v) in &self.values {
            text.push_str(&format!("{k}={v}\n"));
        }
        fs::create_dir_all(out_dir)?;
        fs::write(out_dir.join("resolved_config.txt"), text)?;
        Ok(())
    }
}

/// Pick a value: flag beats config file beats default.
pub fn resolve<T: Clone + std::str::FromStr + ToString>(
    flag: Option<T>,
    file: &FileConfig,
    key: &str,
    default: T,
    resolved: &mut Resolved,
) -> Result<T> {
    let value = if let Some(v) = flag {
        v
    } else if let Some(raw) = file.get(key) {
        raw.parse().map_err(|_| {
            MopeError::Parse(format!("config key {key}: cannot parse {raw:?}"))
        })?
    } else {
        default
    };
    resolved.set(key, value.to_string());
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_comments() {
        let cfg = FileConfig::parse("# hello\n[train]\niterations = 40\nlr=0.002\n\n[data]\nseed=9\n").unwrap();
        assert_eq!(cfg.get("iterations"), Some("40"));
        assert_eq!(cfg.get("lr"), Some("0.002"));
        assert_eq!(cfg.get("seed"), Some("9"));
    }

    #[test]
    fn rejects_bare_words() {
        assert!(FileConfig::parse("iterations\n").is_err());
    }

    #[test]
    fn flag_beats_file_beats_default() {
        let file = FileConfig::parse("iterations=40\n").unwrap();
        let mut resolved = Resolved::default();
        let v = resolve(Some(7usize), &file, "iterations", 100, &mut resolved).unwrap();
        assert_eq!(v, 7);
        let v = resolve(None::<usize>, &file, "iterations", 100, &mut resolved).unwrap();
        assert_eq!(v, 40);
        let v = resolve(None::<usize>, &file, "batch_size", 16, &mut resolved).unwrap();
        assert_eq!(v, 16);
    }
}
