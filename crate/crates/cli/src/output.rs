//! Output directory handling and the JSON panel descriptor that accompanies plot tables.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

pub fn out_dir(dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir.to_path_buf())
}

/// One plot panel: a title and the table behind it.
#[derive(Debug, Serialize)]
pub struct Panel {
    pub title: String,
    pub file: String,
    pub x: String,
    pub series: Vec<String>,
}

impl Panel {
    pub fn new(title: impl Into<String>, file: impl Into<String>, x: &str, series: &[String]) -> Self {
        Self { title: title.into(), file: file.into(), x: x.into(), series: series.to_vec() }
    }
}

#[derive(Debug, Serialize)]
pub struct PanelSet {
    pub figure: String,
    pub panels: Vec<Panel>,
}

pub fn write_panels(dir: &Path, figure: &str, panels: Vec<Panel>) -> Result<()> {
    kantoreg::io::write_json(&dir.join("panels.json"), &PanelSet { figure: figure.into(), panels })?;
    Ok(())
}

/// Writes a table of named columns.
pub fn table(path: &Path, names: &[String], cols: &[Vec<f64>]) -> Result<()> {
    let n: Vec<&str> = names.iter().map(String::as_str).collect();
    let c: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
    kantoreg::io::write_columns(path, &n, &c).with_context(|| format!("writing {}", path.display()))
}
