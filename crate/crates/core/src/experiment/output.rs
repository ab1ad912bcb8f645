//! CSV files with a provenance header.
//!
//! Every file starts with `#` comment lines carrying the config hash, the
//! master seed and the crate version, followed by a header row and plain
//! comma-separated records. Floats use Rust's shortest round-trip format, so
//! identical runs produce identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::config::ExperimentConfig;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Provenance {
    pub config_hash: String,
    pub master_seed: u64,
    pub version: String,
}

impl Provenance {
    pub fn of(cfg: &ExperimentConfig) -> Self {
        Self {
            config_hash: cfg.hash(),
            master_seed: cfg.master_seed,
            version: VERSION.to_string(),
        }
    }

    pub fn header(&self) -> String {
        format!(
            "# config_hash={}\n# master_seed={}\n# version={}\n",
            self.config_hash, self.master_seed, self.version
        )
    }
}

/// A float as it appears in output files.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x}")
    }
}

pub fn render_csv(prov: &Provenance, columns: &[&str], rows: &[Vec<String>]) -> String {
    let mut s = prov.header();
    s.push_str(&columns.join(","));
    s.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), columns.len());
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

pub fn write_csv(path: &Path, prov: &Provenance, columns: &[&str], rows: &[Vec<String>]) -> Result<()> {
    write_text(path, &render_csv(prov, columns, rows))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

/// Header and records of a CSV file, comment lines dropped.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        let columns: Vec<String> = lines
            .next()
            .ok_or_else(|| Error::Schema("file has no header row".into()))?
            .split(',')
            .map(|c| c.trim().to_string())
            .collect();
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let row: Vec<String> = line.split(',').map(|c| c.trim().to_string()).collect();
            if row.len() != columns.len() {
                return Err(Error::Schema(format!(
                    "record {} has {} fields, header has {}",
                    i + 1,
                    row.len(),
                    columns.len()
                )));
            }
            rows.push(row);
        }
        Ok(Self { columns, rows })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))
    }

    pub fn has_columns(&self, names: &[&str]) -> bool {
        names.iter().all(|n| self.columns.iter().any(|c| c == n))
    }

    pub fn float(&self, row: usize, col: usize) -> Result<f64> {
        let cell = &self.rows[row][col];
        cell.parse()
            .map_err(|_| Error::Schema(format!("`{cell}` in column `{}` is not a number", self.columns[col])))
    }
}

/// A line of `key=value` pairs for the end of a file.
pub fn summary_line(pairs: &[(&str, String)]) -> String {
    let mut s = String::from("# summary");
    for (k, v) in pairs {
        let _ = write!(s, " {k}={v}");
    }
    s.push('\n');
    s
}
