//! Two-dimensional transport on small tensor grids.
//!
//! Densities live on cell-centered uniform grids; node `(ix, iy)` sits at the
//! center of its cell and is stored at index `iy * nx + ix` (rows run along x).

mod fit;
mod solve;

pub use fit::{
    circledcirc_2d, circledcirc_2d_on, default_knots_2d, fit_2d, loss_and_gradient_2d, mean_circledcirc, predict_2d, Dataset2D,
    Fit2DConfig, Fit2DResult, Model2D,
};
pub use solve::{
    barycenter_2d, mean_displacement, ot_solve_2d, pushforward_2d, w2_2d, BarycenterConfig, EntropicWarmStart, OtConfig,
    OtSolution, Preconditioner,
};

use crate::error::{Error, Result};
use crate::par;
use serde::{Deserialize, Serialize};

/// Largest supported side length; the c-transform is quadratic in the node count.
pub const MAX_SIDE: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    pub x_lo: f64,
    pub x_hi: f64,
    pub y_lo: f64,
    pub y_hi: f64,
    pub nx: usize,
    pub ny: usize,
}

impl Grid2D {
    pub fn new(x_lo: f64, x_hi: f64, y_lo: f64, y_hi: f64, nx: usize, ny: usize) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2x2 cells, got {nx}x{ny}")));
        }
        if !(x_lo.is_finite() && x_hi.is_finite() && y_lo.is_finite() && y_hi.is_finite()) || x_hi <= x_lo || y_hi <= y_lo {
            return Err(Error::InvalidGrid(format!("bad box [{x_lo}, {x_hi}] x [{y_lo}, {y_hi}]")));
        }
        Ok(Self { x_lo, x_hi, y_lo, y_hi, nx, ny })
    }

    /// `n x n` cells on the unit square.
    pub fn unit(n: usize) -> Self {
        Self::new(0.0, 1.0, 0.0, 1.0, n, n).expect("unit grid needs n >= 2")
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn hx(&self) -> f64 {
        (self.x_hi - self.x_lo) / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        (self.y_hi - self.y_lo) / self.ny as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.hx() * self.hy()
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.nx).map(|i| self.x_lo + (i as f64 + 0.5) * self.hx()).collect()
    }

    pub fn ys(&self) -> Vec<f64> {
        (0..self.ny).map(|j| self.y_lo + (j as f64 + 0.5) * self.hy()).collect()
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    #[inline]
    pub fn point(&self, idx: usize) -> (f64, f64) {
        let (ix, iy) = (idx % self.nx, idx / self.nx);
        (self.x_lo + (ix as f64 + 0.5) * self.hx(), self.y_lo + (iy as f64 + 0.5) * self.hy())
    }

    /// Rejects grids beyond [`MAX_SIDE`] per side.
    pub fn check_size(&self) -> Result<()> {
        if self.nx > MAX_SIDE || self.ny > MAX_SIDE {
            return Err(Error::GridTooLarge { nx: self.nx, ny: self.ny, max: MAX_SIDE });
        }
        Ok(())
    }

    /// Clamps a point into the hull of the cell centers; reports whether it moved.
    pub fn clamp(&self, x: f64, y: f64) -> (f64, f64, bool) {
        let (x0, x1) = (self.x_lo + 0.5 * self.hx(), self.x_hi - 0.5 * self.hx());
        let (y0, y1) = (self.y_lo + 0.5 * self.hy(), self.y_hi - 0.5 * self.hy());
        let cx = x.clamp(x0, x1);
        let cy = y.clamp(y0, y1);
        (cx, cy, cx != x || cy != y)
    }

    /// Bilinear stencil at `(x, y)` (clamped): four `(index, weight)` pairs.
    pub fn stencil(&self, x: f64, y: f64) -> [(usize, f64); 4] {
        let (x, y, _) = self.clamp(x, y);
        let fx = (x - self.x_lo) / self.hx() - 0.5;
        let fy = (y - self.y_lo) / self.hy() - 0.5;
        let ix = (fx.floor().max(0.0) as usize).min(self.nx - 2);
        let iy = (fy.floor().max(0.0) as usize).min(self.ny - 2);
        let tx = (fx - ix as f64).clamp(0.0, 1.0);
        let ty = (fy - iy as f64).clamp(0.0, 1.0);
        [
            (self.index(ix, iy), (1.0 - tx) * (1.0 - ty)),
            (self.index(ix + 1, iy), tx * (1.0 - ty)),
            (self.index(ix, iy + 1), (1.0 - tx) * ty),
            (self.index(ix + 1, iy + 1), tx * ty),
        ]
    }

    pub fn interp(&self, values: &[f64], x: f64, y: f64) -> f64 {
        self.stencil(x, y).iter().map(|(i, w)| w * values[*i]).sum()
    }

    /// Central differences inside, one-sided at the edges.
    pub fn gradient(&self, values: &[f64]) -> Vec<[f64; 2]> {
        let (nx, ny) = (self.nx, self.ny);
        let (hx, hy) = (self.hx(), self.hy());
        par::map_indexed(self.len(), |idx| {
            let (ix, iy) = (idx % nx, idx / nx);
            let gx = if ix == 0 {
                (values[idx + 1] - values[idx]) / hx
            } else if ix == nx - 1 {
                (values[idx] - values[idx - 1]) / hx
            } else {
                (values[idx + 1] - values[idx - 1]) / (2.0 * hx)
            };
            let gy = if iy == 0 {
                (values[idx + nx] - values[idx]) / hy
            } else if iy == ny - 1 {
                (values[idx] - values[idx - nx]) / hy
            } else {
                (values[idx + nx] - values[idx - nx]) / (2.0 * hy)
            };
            [gx, gy]
        })
    }
}

/// A probability density on a [`Grid2D`], normalized so that `sum(values) * cell_area = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Density2D {
    grid: Grid2D,
    values: Vec<f64>,
}

impl Density2D {
    /// Normalizes nonnegative cell values to unit mass.
    pub fn new(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Dimension(format!("density has {} values for {} cells", values.len(), grid.len())));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidDensity(format!("bad cell value {v}")));
        }
        let mass = par::pairwise_sum(&values) * grid.cell_area();
        if !(mass > 0.0) {
            return Err(Error::InvalidDensity("zero total mass".into()));
        }
        let values = values.into_iter().map(|v| v / mass).collect();
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid2D, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let values = (0..grid.len())
            .map(|i| {
                let (x, y) = grid.point(i);
                f(x, y)
            })
            .collect();
        Self::new(grid, values)
    }

    pub fn uniform(grid: Grid2D) -> Self {
        let v = 1.0 / (grid.len() as f64 * grid.cell_area());
        Self { grid, values: vec![v; grid.len()] }
    }

    /// Isotropic Gaussian blob, truncated to the box.
    pub fn gaussian(grid: Grid2D, center: (f64, f64), sd: f64) -> Result<Self> {
        if !(sd > 0.0) {
            return Err(Error::InvalidParameter(format!("sd must be positive, got {sd}")));
        }
        Self::from_fn(grid, |x, y| {
            let r2 = (x - center.0).powi(2) + (y - center.1).powi(2);
            (-0.5 * r2 / (sd * sd)).exp()
        })
    }

    /// Uniform disk, rasterized with cell-area anti-aliasing (`sub x sub` supersampling per cell).
    pub fn disk(grid: Grid2D, center: (f64, f64), radius: f64, sub: usize) -> Result<Self> {
        let sub = sub.max(1);
        let (hx, hy) = (grid.hx(), grid.hy());
        Self::from_fn(grid, |x, y| {
            let mut inside = 0usize;
            for a in 0..sub {
                for b in 0..sub {
                    let px = x - 0.5 * hx + (a as f64 + 0.5) * hx / sub as f64;
                    let py = y - 0.5 * hy + (b as f64 + 0.5) * hy / sub as f64;
                    if (px - center.0).powi(2) + (py - center.1).powi(2) <= radius * radius {
                        inside += 1;
                    }
                }
            }
            inside as f64 / (sub * sub) as f64
        })
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Cell masses `value * cell_area`.
    pub fn masses(&self) -> Vec<f64> {
        let a = self.grid.cell_area();
        self.values.iter().map(|v| v * a).collect()
    }

    pub fn mass(&self) -> f64 {
        par::pairwise_sum(&self.values) * self.grid.cell_area()
    }

    pub fn mean(&self) -> (f64, f64) {
        let m = self.masses();
        let (mut sx, mut sy) = (0.0, 0.0);
        for (i, w) in m.iter().enumerate() {
            let (x, y) = self.grid.point(i);
            sx += w * x;
            sy += w * y;
        }
        (sx, sy)
    }

    pub fn expect(&self, g: &[f64]) -> f64 {
        let terms: Vec<f64> = self.values.iter().zip(g).map(|(v, g)| v * g).collect();
        par::pairwise_sum(&terms) * self.grid.cell_area()
    }

    /// Gaussian-filtered 2D histogram of `points`; `sigma_cells = 0` keeps raw counts.
    pub fn from_histogram(grid: Grid2D, points: &[(f64, f64)], sigma_cells: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptySample);
        }
        let mut counts = vec![0.0; grid.len()];
        for &(x, y) in points {
            let ix = (((x - grid.x_lo) / grid.hx()).floor().max(0.0) as usize).min(grid.nx - 1);
            let iy = (((y - grid.y_lo) / grid.hy()).floor().max(0.0) as usize).min(grid.ny - 1);
            counts[grid.index(ix, iy)] += 1.0;
        }
        if sigma_cells > 0.0 {
            counts = gaussian_filter(&grid, &counts, sigma_cells);
        }
        Self::new(grid, counts)
    }
}

/// Separable Gaussian filter with per-cell renormalization at the edges.
pub fn gaussian_filter(grid: &Grid2D, values: &[f64], sigma_cells: f64) -> Vec<f64> {
    if !(sigma_cells > 0.0) {
        return values.to_vec();
    }
    let r = (3.0 * sigma_cells).ceil() as isize;
    let kernel: Vec<f64> = (-r..=r).map(|d| (-0.5 * (d as f64 / sigma_cells).powi(2)).exp()).collect();
    let (nx, ny) = (grid.nx as isize, grid.ny as isize);
    let pass = |src: &[f64], along_x: bool| -> Vec<f64> {
        par::map_indexed(src.len(), |idx| {
            let (ix, iy) = ((idx as isize) % nx, (idx as isize) / nx);
            let (mut acc, mut wsum) = (0.0, 0.0);
            for (k, w) in kernel.iter().enumerate() {
                let d = k as isize - r;
                let (jx, jy) = if along_x { (ix + d, iy) } else { (ix, iy + d) };
                if jx < 0 || jx >= nx || jy < 0 || jy >= ny {
                    continue;
                }
                acc += w * src[(jy * nx + jx) as usize];
                wsum += w;
            }
            acc / wsum
        })
    };
    let tmp = pass(values, true);
    pass(&tmp, false)
}

/// A potential on a [`Grid2D`] with its finite-difference gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Potential2D {
    pub grid: Grid2D,
    pub values: Vec<f64>,
    pub grad: Vec<[f64; 2]>,
}

impl Potential2D {
    pub fn new(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Dimension(format!("potential has {} values for {} cells", values.len(), grid.len())));
        }
        let grad = grid.gradient(&values);
        Ok(Self { grid, values, grad })
    }

    pub fn zero(grid: Grid2D) -> Self {
        Self { grid, values: vec![0.0; grid.len()], grad: vec![[0.0; 2]; grid.len()] }
    }

    /// Shifts so that the integral against `reference` vanishes.
    pub fn center(&mut self, reference: &Density2D) {
        let c = reference.expect(&self.values);
        self.values.iter_mut().for_each(|v| *v -= c);
    }

    /// `T(x) = x - grad phi(x)`.
    pub fn map(&self) -> TransportField2D {
        let (tx, ty) = (0..self.grid.len())
            .map(|i| {
                let (x, y) = self.grid.point(i);
                (x - self.grad[i][0], y - self.grad[i][1])
            })
            .unzip();
        TransportField2D { grid: self.grid, tx, ty }
    }

    pub fn range(&self) -> (f64, f64) {
        self.values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)))
    }

    /// Range over the cells where `reference` carries mass above `eps`.
    pub fn range_on(&self, reference: &Density2D, eps: f64) -> (f64, f64) {
        self.values
            .iter()
            .zip(reference.values())
            .filter(|(_, d)| **d > eps)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (v, _)| (lo.min(*v), hi.max(*v)))
    }
}

/// A map sampled at the cell centers of its grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportField2D {
    pub grid: Grid2D,
    pub tx: Vec<f64>,
    pub ty: Vec<f64>,
}

impl TransportField2D {
    pub fn identity(grid: Grid2D) -> Self {
        let (tx, ty) = (0..grid.len()).map(|i| grid.point(i)).unzip();
        Self { grid, tx, ty }
    }

    /// `(T(x) - x)` per cell.
    pub fn displacement(&self) -> Vec<[f64; 2]> {
        (0..self.grid.len())
            .map(|i| {
                let (x, y) = self.grid.point(i);
                [self.tx[i] - x, self.ty[i] - y]
            })
            .collect()
    }
}

/// `phi^c(y) = min_x |x - y|^2 / 2 - phi(x)`, by exhaustive search over all source cells.
pub fn c_transform(phi: &Potential2D, target: &Grid2D) -> Result<Potential2D> {
    phi.grid.check_size()?;
    target.check_size()?;
    let src: Vec<(f64, f64)> = (0..phi.grid.len()).map(|i| phi.grid.point(i)).collect();
    let values = par::map_indexed(target.len(), |j| {
        let (y1, y2) = target.point(j);
        src.iter()
            .zip(&phi.values)
            .map(|(&(x1, x2), p)| 0.5 * ((x1 - y1).powi(2) + (x2 - y2).powi(2)) - p)
            .fold(f64::INFINITY, f64::min)
    });
    Potential2D::new(*target, values)
}

/// Same minimum as [`c_transform`], computed one axis at a time.
///
/// The quadratic cost splits over coordinates, so the inner minimum over the
/// source `y`-coordinate can be taken first for every source column.
pub fn c_transform_separable(phi: &Potential2D, target: &Grid2D) -> Potential2D {
    Potential2D::new(*target, c_transform_values(&phi.grid, &phi.values, target)).expect("grid lengths agree")
}

pub(crate) fn c_transform_values(src: &Grid2D, values: &[f64], target: &Grid2D) -> Vec<f64> {
    let (sx, sy) = (src.xs(), src.ys());
    let (tx, ty) = (target.xs(), target.ys());
    // inner[ix * ty.len() + jy] = min_iy (sy[iy] - ty[jy])^2 / 2 - phi(ix, iy)
    let inner: Vec<f64> = par::map_indexed(src.nx * ty.len(), |k| {
        let (ix, jy) = (k / ty.len(), k % ty.len());
        let y = ty[jy];
        sy.iter()
            .enumerate()
            .map(|(iy, &s)| 0.5 * (s - y).powi(2) - values[src.index(ix, iy)])
            .fold(f64::INFINITY, f64::min)
    });
    par::map_indexed(target.len(), |j| {
        let (jx, jy) = (j % target.nx, j / target.nx);
        let x = tx[jx];
        sx.iter()
            .enumerate()
            .map(|(ix, &s)| 0.5 * (s - x).powi(2) + inner[ix * ty.len() + jy])
            .fold(f64::INFINITY, f64::min)
    })
}

fn log_sum_exp(it: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = it.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + it.map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Entropic c-transform `-eps log sum_x w(x) exp((phi(x) - |x - y|^2 / 2) / eps)`.
///
/// Tends to the hard transform restricted to `{w > 0}` as `eps -> 0`; computed
/// one axis at a time in the log domain like [`c_transform_separable`].
pub(crate) fn soft_c_transform_values(src: &Grid2D, values: &[f64], weights: &[f64], target: &Grid2D, eps: f64) -> Vec<f64> {
    let (sx, sy) = (src.xs(), src.ys());
    let (tx, ty) = (target.xs(), target.ys());
    let logw: Vec<f64> = weights.iter().map(|w| if *w > 0.0 { w.ln() } else { f64::NEG_INFINITY }).collect();
    let inner: Vec<f64> = par::map_indexed(src.nx * ty.len(), |k| {
        let (ix, jy) = (k / ty.len(), k % ty.len());
        let y = ty[jy];
        log_sum_exp(sy.iter().enumerate().filter_map(|(iy, &s)| {
            let i = src.index(ix, iy);
            (logw[i] > f64::NEG_INFINITY).then(|| logw[i] + (values[i] - 0.5 * (s - y).powi(2)) / eps)
        }))
    });
    par::map_indexed(target.len(), |j| {
        let (jx, jy) = (j % target.nx, j / target.nx);
        let x = tx[jx];
        -eps * log_sum_exp(
            sx.iter()
                .enumerate()
                .map(|(ix, &s)| inner[ix * ty.len() + jy] - 0.5 * (s - x).powi(2) / eps)
                .filter(|v| *v > f64::NEG_INFINITY),
        )
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_rejects_degenerate_shapes() {
        assert!(Grid2D::new(0.0, 1.0, 0.0, 1.0, 1, 4).is_err());
        assert!(Grid2D::new(0.0, 0.0, 0.0, 1.0, 4, 4).is_err());
        assert!(matches!(Grid2D::unit(65).check_size(), Err(Error::GridTooLarge { .. })));
    }

    #[test]
    fn density_normalizes_to_unit_mass() {
        let d = Density2D::gaussian(Grid2D::unit(20), (0.4, 0.6), 0.1).unwrap();
        assert!((d.mass() - 1.0).abs() < 1e-12);
        let (mx, my) = d.mean();
        assert!((mx - 0.4).abs() < 2e-3 && (my - 0.6).abs() < 2e-3);
    }

    #[test]
    fn gradient_exact_on_linear_potentials() {
        let g = Grid2D::unit(9);
        let vals: Vec<f64> = (0..g.len()).map(|i| {
            let (x, y) = g.point(i);
            0.3 * x - 0.7 * y
        }).collect();
        let p = Potential2D::new(g, vals).unwrap();
        for gr in &p.grad {
            assert!((gr[0] - 0.3).abs() < 1e-12 && (gr[1] + 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn c_transform_of_zero_vanishes_on_grid() {
        let g = Grid2D::unit(8);
        let c = c_transform(&Potential2D::zero(g), &g).unwrap();
        assert!(c.values.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn c_transform_linear_matches_enumeration() {
        let g = Grid2D::unit(5);
        let a = (0.2, -0.1);
        let vals: Vec<f64> = (0..g.len()).map(|i| {
            let (x, y) = g.point(i);
            a.0 * x + a.1 * y
        }).collect();
        let phi = Potential2D::new(g, vals).unwrap();
        let c = c_transform(&phi, &g).unwrap();
        for j in 0..g.len() {
            let (y1, y2) = g.point(j);
            let mut best = f64::INFINITY;
            for i in 0..g.len() {
                let (x1, x2) = g.point(i);
                best = best.min(0.5 * ((x1 - y1).powi(2) + (x2 - y2).powi(2)) - (a.0 * x1 + a.1 * x2));
            }
            assert_eq!(c.values[j], best);
        }
    }

    #[test]
    fn separable_agrees_with_brute_force() {
        let g = Grid2D::new(0.0, 1.0, 0.0, 2.0, 7, 5).unwrap();
        let t = Grid2D::new(-0.5, 1.5, 0.0, 1.0, 6, 9).unwrap();
        let vals: Vec<f64> = (0..g.len()).map(|i| ((i * 37 % 11) as f64) * 0.03).collect();
        let phi = Potential2D::new(g, vals).unwrap();
        let a = c_transform(&phi, &t).unwrap();
        let b = c_transform_separable(&phi, &t);
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn double_transform_dominates() {
        let g = Grid2D::unit(6);
        let vals: Vec<f64> = (0..g.len()).map(|i| ((i * 13 % 7) as f64) * 0.02).collect();
        let phi = Potential2D::new(g, vals).unwrap();
        let cc = c_transform(&c_transform(&phi, &g).unwrap(), &g).unwrap();
        for (a, b) in cc.values.iter().zip(&phi.values) {
            assert!(*a >= *b - 1e-15);
        }
    }

    #[test]
    fn soft_transform_approaches_hard_transform() {
        let g = Grid2D::unit(6);
        let vals: Vec<f64> = (0..g.len()).map(|i| ((i * 13 % 7) as f64) * 0.02).collect();
        let w = vec![1.0 / g.len() as f64; g.len()];
        let hard = c_transform_values(&g, &vals, &g);
        let soft = soft_c_transform_values(&g, &vals, &w, &g, 1e-5);
        for (h, s) in hard.iter().zip(&soft) {
            // -eps log w shifts by eps log N; ties add at most eps log N more
            assert!((s - h - 1e-5 * (g.len() as f64).ln()).abs() < 1e-4, "{s} vs {h}");
        }
    }

    #[test]
    fn disk_rasterization_center_and_mass() {
        let g = Grid2D::unit(40);
        let d = Density2D::disk(g, (0.2, 0.2), 0.05, 8).unwrap();
        assert!((d.mass() - 1.0).abs() < 1e-9);
        let (mx, my) = d.mean();
        assert!((mx - 0.2).abs() < 0.5 * g.hx() && (my - 0.2).abs() < 0.5 * g.hy());
    }

    #[test]
    fn histogram_smoothing_keeps_mass() {
        let g = Grid2D::unit(16);
        let pts = vec![(0.5, 0.5), (0.51, 0.49), (0.2, 0.8)];
        let d = Density2D::from_histogram(g, &pts, 1.0).unwrap();
        assert!((d.mass() - 1.0).abs() < 1e-12);
        assert!(Density2D::from_histogram(g, &[], 1.0).is_err());
    }
}
