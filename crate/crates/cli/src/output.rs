//! Output staging and the run record written beside every file.
//!
//! Subcommands stage their files in memory; [`Writer::commit`] is the only place that touches
//! the output directory, so parallel solver work never races on files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    pub config: Value,
    pub output: String,
    pub wall_seconds: f64,
    pub diagnostics: Value,
    pub warnings: Vec<String>,
}

#[derive(Debug, Default)]
pub struct Writer {
    files: Vec<(String, Vec<u8>)>,
    pub diagnostics: Value,
    pub warnings: Vec<String>,
}

impl Writer {
    pub fn new() -> Self {
        Self {
            diagnostics: Value::Object(Default::default()),
            ..Self::default()
        }
    }

    pub fn json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.files.push((name.to_string(), bytes));
        Ok(())
    }

    pub fn csv(&mut self, name: &str, table: Csv) {
        self.files.push((name.to_string(), table.0.into_bytes()));
    }

    pub fn diagnostic(&mut self, key: &str, value: impl Serialize) {
        if let (Value::Object(m), Ok(v)) = (&mut self.diagnostics, serde_json::to_value(value)) {
            m.insert(key.to_string(), v);
        }
    }

    /// Writes every staged file followed by `<file>.run.json`; returns the paths written.
    pub fn commit(self, dir: &Path, subcommand: &str, config: Value, wall_seconds: f64) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut written = Vec::new();
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
            let record = RunRecord {
                tool: "llband",
                version: env!("CARGO_PKG_VERSION"),
                subcommand: subcommand.to_string(),
                config: config.clone(),
                output: name.clone(),
                wall_seconds,
                diagnostics: self.diagnostics.clone(),
                warnings: self.warnings.clone(),
            };
            let side = dir.join(format!("{name}.run.json"));
            let mut body = serde_json::to_vec_pretty(&record)?;
            body.push(b'\n');
            fs::write(&side, body).with_context(|| format!("writing {}", side.display()))?;
            written.push(path);
        }
        Ok(written)
    }
}

/// CSV text with shortest round-trip number formatting.
pub struct Csv(String);

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Self(header.join(",") + "\n")
    }

    pub fn row(&mut self, cells: &[Cell]) {
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                self.0.push(',');
            }
            match c {
                Cell::F(v) => write!(self.0, "{v:e}"),
                Cell::U(v) => write!(self.0, "{v}"),
                Cell::S(v) => write!(self.0, "{v}"),
            }
            .expect("writing to a String");
        }
        self.0.push('\n');
    }
}

pub enum Cell<'a> {
    F(f64),
    U(usize),
    S(&'a str),
}
