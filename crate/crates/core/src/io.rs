//! CSV and JSON formats for densities, maps, potentials and dataset manifests.
//!
//! 1D densities are `x,density`, raw samples are a single `value` column, maps and
//! potentials are `x,value[,deriv]`. 2D densities are `x,y,density` in row-major order
//! (x fastest) next to a `<stem>.grid.json` sidecar; 2D maps are `x,y,Tx,Ty`.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{density_from_samples, Density1D, Grid1D};
use crate::model::Dataset;
use crate::ot1d::{Potential1D, TransportMap1D};
use crate::ot2d::{BarycenterConfig, Dataset2D, Density2D, Grid2D, TransportField2D};

/// Relative tolerance on node spacing when reading a density table.
const SPACING_TOL: f64 = 1e-9;

/// Default KDE bandwidth for sample files.
pub const DEFAULT_BANDWIDTH: f64 = 0.1;

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn header(path: &Path) -> Result<Vec<String>> {
    let mut r = reader(path)?;
    let h = r.headers().map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    Ok(h.iter().map(str::to_ascii_lowercase).collect())
}

/// Reads numeric columns by name; rows must be complete.
fn read_columns(path: &Path, names: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut r = reader(path)?;
    let h: Vec<String> = r
        .headers()
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_ascii_lowercase)
        .collect();
    let idx = names
        .iter()
        .map(|n| {
            h.iter()
                .position(|c| c == n)
                .ok_or_else(|| Error::Parse(format!("{}: missing column {n:?} (header {h:?})", path.display())))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut cols = vec![Vec::new(); names.len()];
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        for (c, &i) in idx.iter().enumerate() {
            let field = rec.get(i).unwrap_or("");
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Parse(format!("{}: row {}: bad number {field:?}", path.display(), line + 2)))?;
            cols[c].push(v);
        }
    }
    Ok(cols)
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    csv::Writer::from_path(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// Writes named columns of equal length.
pub fn write_columns(path: &Path, names: &[&str], cols: &[&[f64]]) -> Result<()> {
    if names.len() != cols.len() || cols.windows(2).any(|w| w[0].len() != w[1].len()) {
        return Err(Error::Dimension("columns must match the header and each other".into()));
    }
    let mut w = writer(path)?;
    let wrap = |e: csv::Error| Error::Parse(format!("{}: {e}", path.display()));
    w.write_record(names).map_err(wrap)?;
    let rows = cols.first().map_or(0, |c| c.len());
    for m in 0..rows {
        w.write_record(cols.iter().map(|c| format_num(c[m]))).map_err(wrap)?;
    }
    w.flush()?;
    Ok(())
}

/// Shortest representation that round-trips.
fn format_num(v: f64) -> String {
    format!("{v:?}")
}

/// Checks that `xs` are uniformly spaced and returns the grid they describe.
pub fn grid_from_nodes(xs: &[f64]) -> Result<Grid1D> {
    if xs.len() < 2 {
        return Err(Error::InvalidGrid(format!("need at least two nodes, got {}", xs.len())));
    }
    let n = xs.len();
    let grid = Grid1D::new(xs[0], xs[n - 1], n)?;
    let h = grid.h();
    for (i, x) in xs.iter().enumerate() {
        if (x - grid.node(i)).abs() > SPACING_TOL * h.max(grid.hi.abs().max(grid.lo.abs())) {
            return Err(Error::InvalidGrid(format!("node {i} at {x} breaks uniform spacing {h}")));
        }
    }
    Ok(grid)
}

pub fn read_density_csv(path: &Path) -> Result<Density1D> {
    let cols = read_columns(path, &["x", "density"])?;
    let grid = grid_from_nodes(&cols[0])?;
    Density1D::new(grid, cols[1].clone())
}

pub fn write_density_csv(path: &Path, d: &Density1D) -> Result<()> {
    write_columns(path, &["x", "density"], &[&d.grid().nodes(), d.values()])
}

pub fn read_samples_csv(path: &Path) -> Result<Vec<f64>> {
    Ok(read_columns(path, &["value"])?.remove(0))
}

pub fn write_samples_csv(path: &Path, samples: &[f64]) -> Result<()> {
    write_columns(path, &["value"], &[samples])
}

pub fn write_map_csv(path: &Path, t: &TransportMap1D) -> Result<()> {
    write_columns(path, &["x", "value"], &[&t.grid.nodes(), &t.values])
}

pub fn read_map_csv(path: &Path) -> Result<TransportMap1D> {
    let cols = read_columns(path, &["x", "value"])?;
    TransportMap1D::new(grid_from_nodes(&cols[0])?, cols[1].clone())
}

pub fn write_potential_csv(path: &Path, phi: &Potential1D) -> Result<()> {
    write_columns(path, &["x", "value", "deriv"], &[&phi.grid.nodes(), &phi.values, &phi.deriv])
}

pub fn read_potential_csv(path: &Path) -> Result<Potential1D> {
    let cols = read_columns(path, &["x", "value", "deriv"])?;
    let grid = grid_from_nodes(&cols[0])?;
    Ok(Potential1D { grid, values: cols[1].clone(), deriv: cols[2].clone() })
}

/// Domain record written next to a map or potential table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar1D {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    /// Which measure the potential is centered against, e.g. `"nu_bar"`.
    pub reference: String,
}

/// `dir/name.csv` becomes `dir/name.grid.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("grid.json")
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let f = File::open(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
}

pub fn write_potential_with_sidecar(path: &Path, phi: &Potential1D, reference: &str) -> Result<()> {
    write_potential_csv(path, phi)?;
    let g = phi.grid;
    write_json(&sidecar_path(path), &Sidecar1D { lo: g.lo, hi: g.hi, n: g.n, reference: reference.into() })
}

pub fn write_density2d_csv(path: &Path, d: &Density2D) -> Result<()> {
    let g = d.grid();
    let (xs, ys): (Vec<f64>, Vec<f64>) = (0..g.len()).map(|i| g.point(i)).unzip();
    write_columns(path, &["x", "y", "density"], &[&xs, &ys, d.values()])?;
    write_json(&sidecar_path(path), g)
}

/// Reads a 2D density; the grid comes from the sidecar, and row coordinates are checked against it.
pub fn read_density2d_csv(path: &Path) -> Result<Density2D> {
    let grid: Grid2D = read_json(&sidecar_path(path))?;
    read_density2d_on(path, grid)
}

/// Reads a 2D density whose layout is given by `grid` instead of a sidecar.
pub fn read_density2d_on(path: &Path, grid: Grid2D) -> Result<Density2D> {
    let cols = read_columns(path, &["x", "y", "density"])?;
    if cols[2].len() != grid.len() {
        return Err(Error::Dimension(format!(
            "{}: {} rows for a {}x{} grid",
            path.display(),
            cols[2].len(),
            grid.nx,
            grid.ny
        )));
    }
    let tol = 1e-6 * grid.hx().min(grid.hy());
    for i in 0..grid.len() {
        let (x, y) = grid.point(i);
        if (cols[0][i] - x).abs() > tol || (cols[1][i] - y).abs() > tol {
            return Err(Error::InvalidGrid(format!(
                "{}: row {} is at ({}, {}), expected cell center ({x}, {y})",
                path.display(),
                i + 2,
                cols[0][i],
                cols[1][i]
            )));
        }
    }
    Density2D::new(grid, cols[2].clone())
}

pub fn write_field2d_csv(path: &Path, t: &TransportField2D) -> Result<()> {
    let g = t.grid;
    let (xs, ys): (Vec<f64>, Vec<f64>) = (0..g.len()).map(|i| g.point(i)).unzip();
    write_columns(path, &["x", "y", "Tx", "Ty"], &[&xs, &ys, &t.tx, &t.ty])
}

/// Grid part of a manifest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridDescriptor {
    OneD { lo: f64, hi: f64, n: usize },
    TwoD {
        #[serde(default)]
        x_lo: f64,
        #[serde(default = "one")]
        x_hi: f64,
        #[serde(default)]
        y_lo: f64,
        #[serde(default = "one")]
        y_hi: f64,
        nx: usize,
        ny: usize,
    },
}

fn one() -> f64 {
    1.0
}

impl GridDescriptor {
    pub fn grid_1d(&self) -> Result<Grid1D> {
        match *self {
            GridDescriptor::OneD { lo, hi, n } => Grid1D::new(lo, hi, n),
            GridDescriptor::TwoD { .. } => Err(Error::InvalidGrid("expected a 1D grid (lo, hi, n)".into())),
        }
    }

    pub fn grid_2d(&self) -> Result<Grid2D> {
        match *self {
            GridDescriptor::TwoD { x_lo, x_hi, y_lo, y_hi, nx, ny } => Grid2D::new(x_lo, x_hi, y_lo, y_hi, nx, ny),
            GridDescriptor::OneD { .. } => Err(Error::InvalidGrid("expected a 2D grid (nx, ny)".into())),
        }
    }
}

impl From<Grid1D> for GridDescriptor {
    fn from(g: Grid1D) -> Self {
        GridDescriptor::OneD { lo: g.lo, hi: g.hi, n: g.n }
    }
}

impl From<Grid2D> for GridDescriptor {
    fn from(g: Grid2D) -> Self {
        GridDescriptor::TwoD { x_lo: g.x_lo, x_hi: g.x_hi, y_lo: g.y_lo, y_hi: g.y_hi, nx: g.nx, ny: g.ny }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub response: PathBuf,
    #[serde(default)]
    pub predictors: Vec<PathBuf>,
    #[serde(default)]
    pub scalars: Vec<f64>,
}

/// Dataset manifest. Relative paths are resolved against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default = "default_dimension")]
    pub dimension: u8,
    pub grid: GridDescriptor,
    pub records: Vec<ManifestRecord>,
    /// KDE bandwidth for 1D files holding raw samples.
    #[serde(default)]
    pub bandwidth: Option<f64>,
    #[serde(skip)]
    pub base: PathBuf,
}

fn default_dimension() -> u8 {
    1
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let mut m: Manifest = read_json(path)?;
        m.base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.records.is_empty() {
            return Err(Error::EmptyInput);
        }
        let (p, q) = (self.records[0].predictors.len(), self.records[0].scalars.len());
        for (i, r) in self.records.iter().enumerate() {
            if r.predictors.len() != p || r.scalars.len() != q {
                return Err(Error::Dimension(format!(
                    "record {i} has {} predictors and {} scalars, record 0 has {p} and {q}",
                    r.predictors.len(),
                    r.scalars.len()
                )));
            }
            for f in std::iter::once(&r.response).chain(&r.predictors) {
                let full = self.resolve(f);
                if !full.is_file() {
                    return Err(Error::Parse(format!("record {i}: missing file {}", full.display())));
                }
            }
        }
        match self.dimension {
            1 => {
                self.grid.grid_1d()?;
            }
            2 => {
                self.grid.grid_2d()?;
                if q > 0 {
                    return Err(Error::Dimension("2D records cannot carry scalar covariates".into()));
                }
            }
            d => return Err(Error::Dimension(format!("dimension must be 1 or 2, got {d}"))),
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.records.len()
    }

    pub fn p(&self) -> usize {
        self.records[0].predictors.len()
    }

    pub fn q(&self) -> usize {
        self.records[0].scalars.len()
    }

    /// A 1D density from either a density table (resampled onto the manifest grid) or raw samples.
    pub fn load_density_1d(&self, path: &Path) -> Result<Density1D> {
        let grid = self.grid.grid_1d()?;
        load_density_1d_on(&self.resolve(path), grid, self.bandwidth.unwrap_or(DEFAULT_BANDWIDTH))
    }

    pub fn load_dataset_1d(&self) -> Result<Dataset> {
        let responses = self
            .records
            .iter()
            .map(|r| self.load_density_1d(&r.response))
            .collect::<Result<Vec<_>>>()?;
        let predictors = self
            .records
            .iter()
            .map(|r| r.predictors.iter().map(|f| self.load_density_1d(f)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let scalars = self.records.iter().map(|r| r.scalars.clone()).collect();
        Dataset::new(responses, predictors, scalars)
    }

    pub fn load_density_2d(&self, path: &Path) -> Result<Density2D> {
        read_density2d_on(&self.resolve(path), self.grid.grid_2d()?)
    }

    pub fn load_dataset_2d(&self, bary: &BarycenterConfig) -> Result<Dataset2D> {
        let responses = self
            .records
            .iter()
            .map(|r| self.load_density_2d(&r.response))
            .collect::<Result<Vec<_>>>()?;
        let predictors = self
            .records
            .iter()
            .map(|r| r.predictors.iter().map(|f| self.load_density_2d(f)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Dataset2D::new(responses, predictors, bary)
    }
}

/// Loads a density table or a sample file onto `grid`.
///
/// A density table on a different uniform grid is linearly interpolated onto `grid`
/// (zero outside its domain) and renormalized.
pub fn load_density_1d_on(path: &Path, grid: Grid1D, bandwidth: f64) -> Result<Density1D> {
    let h = header(path)?;
    if h.len() == 1 && h[0] == "value" {
        return density_from_samples(&read_samples_csv(path)?, grid, bandwidth);
    }
    let d = read_density_csv(path)?;
    if *d.grid() == grid {
        return Ok(d);
    }
    let src = *d.grid();
    let vals = grid
        .nodes()
        .into_iter()
        .map(|x| if x < src.lo || x > src.hi { 0.0 } else { src.interp(d.values(), x) })
        .collect();
    Density1D::new(grid, vals)
}
