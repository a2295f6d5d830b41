//! `key=value` configuration files. Blank lines and lines starting with
//! `#` are ignored; keys may repeat.

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {reason}")]
    Invalid { line: usize, reason: String },
    #[error("missing required key {0}")]
    Missing(&'static str),
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl ConfigError {
    pub fn at(line: usize, reason: impl Into<String>) -> Self {
        ConfigError::Invalid { line, reason: reason.into() }
    }
}

pub struct Line<'a> {
    pub number: usize,
    pub key: &'a str,
    pub value: &'a str,
}

pub fn lines(text: &str) -> Result<Vec<Line<'_>>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let t = raw.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let (key, value) = t.split_once('=').ok_or_else(|| ConfigError::at(i + 1, "expected key=value"))?;
        out.push(Line { number: i + 1, key: key.trim(), value: value.trim() });
    }
    Ok(out)
}

pub fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })
}

pub fn number<T: std::str::FromStr>(line: &Line<'_>) -> Result<T, ConfigError> {
    line.value.parse().map_err(|_| ConfigError::at(line.number, format!("{}: not a number: {}", line.key, line.value)))
}
