//! Deterministic output files.
//!
//! Every numeric CSV field is printed with 9 significant digits in
//! scientific notation, JSON documents are pretty-printed by `serde_json`
//! with sorted struct fields as declared, and the only timestamp lives in
//! `run_meta.json` so that rerunning a command reproduces every other file
//! byte for byte.

use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;

/// A numeric CSV field: 9 significant digits, scientific notation.
pub fn g9(x: f64) -> String {
    format!("{x:.8e}")
}

/// An optional numeric CSV field; empty when absent.
pub fn g9_opt(x: Option<f64>) -> String {
    x.map(g9).unwrap_or_default()
}

/// Creates the output directory (and parents) if needed.
pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output dir {}", dir.display()))
}

/// Writes a pretty-printed JSON document.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Writes CSV rows under a fixed header. All quoting is the caller's
/// concern; fields here never contain commas or newlines.
pub fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    let mut text = String::with_capacity(header.len() + 1 + rows.iter().map(|r| r.len() + 1).sum::<usize>());
    text.push_str(header);
    text.push('\n');
    for row in rows {
        text.push_str(row);
        text.push('\n');
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// The run metadata document — the single place a wall-clock timestamp is
/// recorded, excluded from byte-for-byte determinism checks.
#[derive(Debug, Serialize)]
pub struct RunMeta {
    pub command: String,
    pub version: String,
    pub unix_time_secs: u64,
    pub threads: Option<usize>,
    pub full_scale: bool,
}

impl RunMeta {
    pub fn new(command: &str, threads: Option<usize>, full_scale: bool) -> Self {
        RunMeta {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            unix_time_secs: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            threads,
            full_scale,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join("run_meta.json"), self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(g9(1.0), "1.00000000e0");
        assert_eq!(g9(0.05), "5.00000000e-2");
        assert_eq!(g9(123456789.123), "1.23456789e8");
        assert_eq!(g9_opt(None), "");
        assert_eq!(g9_opt(Some(2.0)), "2.00000000e0");
    }
}
