//! The results file: flat `key = value` text, one metric per line, written
//! in a stable order so identical evaluations produce identical bytes.

use std::path::Path;

use crate::CliError;

/// An ordered list of named scalar metrics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Results {
    entries: Vec<(String, f64)>,
}

impl Results {
    pub fn new() -> Self {
        Results::default()
    }

    /// Appends a metric; keys must be unique within one results set.
    pub fn push(&mut self, key: impl Into<String>, value: f64) {
        let key = key.into();
        debug_assert!(
            !self.entries.iter().any(|(k, _)| *k == key),
            "duplicate results key {key}"
        );
        self.entries.push((key, value));
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.entries.iter().find(|(k, _)| k == key).map(|&(_, v)| v)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// All entries whose key starts with `prefix`, in file order.
    pub fn with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = (&'a str, f64)> {
        self.iter().filter(move |(k, _)| k.starts_with(prefix))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(&format!("{k} = {v:.12}\n"));
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        crate::rundir::write_atomic(path, self.to_text().as_bytes())
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut out = Results::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Parse(format!("results line {} is not key = value: {line:?}", i + 1))
            })?;
            let key = key.trim();
            let value: f64 = value.trim().parse().map_err(|_| {
                CliError::Parse(format!("results line {} has a non-numeric value: {line:?}", i + 1))
            })?;
            if key.is_empty() {
                return Err(CliError::Parse(format!("results line {} has an empty key", i + 1)));
            }
            out.push(key, value);
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Parse(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }
}
