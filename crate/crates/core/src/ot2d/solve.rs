//! Dual ascent for quadratic-cost transport on a grid, plus pushforward and barycenters.

use super::{c_transform_values, gaussian_filter, soft_c_transform_values, Density2D, Grid2D, Potential2D, TransportField2D};
use crate::error::{Error, Result};
use crate::par;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// How the raw ascent direction `mu - S_# nu` is conditioned before the step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Preconditioner {
    /// Separable Gaussian filter with the given bandwidth in cells.
    Gaussian { sigma_cells: f64 },
    /// Inverse Neumann Laplacian, applied in the cosine basis.
    H1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OtConfig {
    pub iters: usize,
    /// Initial step; adapted up and down so that the dual never decreases.
    pub step: f64,
    /// Stop once the relative dual gain stays below this for `patience` iterations.
    pub tol: f64,
    pub patience: usize,
    pub preconditioner: Preconditioner,
    /// Warm start from an annealed entropic solve; `None` starts the ascent at zero.
    pub warm_start: Option<EntropicWarmStart>,
}

/// Log-domain Sinkhorn with the temperature halved from `eps_start` down to
/// `eps_final_cells` cell areas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EntropicWarmStart {
    pub eps_start: f64,
    pub eps_final_cells: f64,
    pub sweeps_per_stage: usize,
}

impl Default for EntropicWarmStart {
    fn default() -> Self {
        Self { eps_start: 0.05, eps_final_cells: 0.25, sweeps_per_stage: 20 }
    }
}

/// Entropic dual potential `phi` on the source grid, extended softly to cells without mass.
fn entropic_potential(gm: &Grid2D, a: &[f64], gn: &Grid2D, b: &[f64], ws: &EntropicWarmStart) -> Vec<f64> {
    let eps_final = ws.eps_final_cells * gm.cell_area().max(gn.cell_area());
    let mut eps = ws.eps_start.max(eps_final);
    let mut phi = vec![0.0; gm.len()];
    loop {
        for _ in 0..ws.sweeps_per_stage.max(1) {
            let psi = soft_c_transform_values(gm, &phi, a, gn, eps);
            phi = soft_c_transform_values(gn, &psi, b, gm, eps);
        }
        if eps <= eps_final {
            break;
        }
        eps = (0.5 * eps).max(eps_final);
    }
    phi
}

impl Default for OtConfig {
    fn default() -> Self {
        Self {
            iters: 2000,
            step: 1.0,
            tol: 1e-10,
            patience: 5,
            preconditioner: Preconditioner::Gaussian { sigma_cells: 1.0 },
            warm_start: Some(EntropicWarmStart::default()),
        }
    }
}

/// Result of [`ot_solve_2d`].
#[derive(Debug, Clone)]
pub struct OtSolution {
    /// c-concave potential on the source grid, centered against the source.
    pub potential: Potential2D,
    /// `T(x) = x - grad phi(x)` on the source grid.
    pub map: TransportField2D,
    /// Value of the dual, `W2^2 / 2` at optimum.
    pub dual: f64,
    pub dual_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl OtSolution {
    pub fn w2(&self) -> f64 {
        (2.0 * self.dual).max(0.0).sqrt()
    }
}

fn dual_value(a: &[f64], b: &[f64], phi: &[f64], phi_c: &[f64]) -> f64 {
    let t: Vec<f64> = a.iter().zip(phi).map(|(m, p)| m * p).chain(b.iter().zip(phi_c).map(|(m, p)| m * p)).collect();
    par::pairwise_sum(&t)
}

/// Bilinear mass splat of `masses` (living on `from`) through `(tx, ty)` onto `onto`.
/// Returns the splatted masses and whether any point had to be clamped.
fn splat(onto: &Grid2D, masses: &[f64], tx: &[f64], ty: &[f64]) -> (Vec<f64>, bool) {
    let mut out = vec![0.0; onto.len()];
    let mut clamped = false;
    for ((m, x), y) in masses.iter().zip(tx).zip(ty) {
        if *m == 0.0 {
            continue;
        }
        let (_, _, c) = onto.clamp(*x, *y);
        clamped |= c;
        for (i, w) in onto.stencil(*x, *y) {
            out[i] += m * w;
        }
    }
    (out, clamped)
}

/// `C[k][n] = cos(pi k (n + 1/2) / N)`, the cell-centered cosine basis.
fn cosine_basis(n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n * n];
    for k in 0..n {
        for j in 0..n {
            c[k * n + j] = (PI * k as f64 * (j as f64 + 0.5) / n as f64).cos();
        }
    }
    c
}

/// Solves `-Lap u = g` with Neumann walls; the mean of `g` is discarded.
fn inverse_laplacian(grid: &Grid2D, g: &[f64]) -> Vec<f64> {
    let (nx, ny) = (grid.nx, grid.ny);
    let (cx, cy) = (cosine_basis(nx), cosine_basis(ny));
    let lx: Vec<f64> = (0..nx).map(|k| (2.0 - 2.0 * (PI * k as f64 / nx as f64).cos()) / grid.hx().powi(2)).collect();
    let ly: Vec<f64> = (0..ny).map(|k| (2.0 - 2.0 * (PI * k as f64 / ny as f64).cos()) / grid.hy().powi(2)).collect();
    // forward along x, then y
    let mut a = vec![0.0; nx * ny];
    for iy in 0..ny {
        for k in 0..nx {
            a[iy * nx + k] = (0..nx).map(|j| cx[k * nx + j] * g[iy * nx + j]).sum();
        }
    }
    let mut hat = vec![0.0; nx * ny];
    for ky in 0..ny {
        for kx in 0..nx {
            hat[ky * nx + kx] = (0..ny).map(|j| cy[ky * ny + j] * a[j * nx + kx]).sum();
        }
    }
    for ky in 0..ny {
        for kx in 0..nx {
            let lam = lx[kx] + ly[ky];
            hat[ky * nx + kx] = if lam > 0.0 { hat[ky * nx + kx] / lam } else { 0.0 };
        }
    }
    // inverse: u_j = (1/N) c_0 + (2/N) sum_{k>0} c_k cos(...)
    let sx = |k: usize| if k == 0 { 1.0 / nx as f64 } else { 2.0 / nx as f64 };
    let sy = |k: usize| if k == 0 { 1.0 / ny as f64 } else { 2.0 / ny as f64 };
    let mut b = vec![0.0; nx * ny];
    for iy in 0..ny {
        for kx in 0..nx {
            b[iy * nx + kx] = (0..ny).map(|ky| sy(ky) * cy[ky * ny + iy] * hat[ky * nx + kx]).sum();
        }
    }
    let mut u = vec![0.0; nx * ny];
    for iy in 0..ny {
        for ix in 0..nx {
            u[iy * nx + ix] = (0..nx).map(|kx| sx(kx) * cx[kx * nx + ix] * b[iy * nx + kx]).sum();
        }
    }
    u
}

fn precondition(p: Preconditioner, grid: &Grid2D, g: &[f64]) -> Vec<f64> {
    match p {
        Preconditioner::Gaussian { sigma_cells } => gaussian_filter(grid, g, sigma_cells),
        Preconditioner::H1 => inverse_laplacian(grid, g),
    }
}

/// Optimal transport from `mu` to `nu` by monotone ascent on the Kantorovich dual.
///
/// Each iteration pulls `nu` back through `S(y) = y - grad phi^c(y)`, forms the
/// density mismatch with `mu`, conditions it, and takes the largest tried step
/// that does not lower the dual. The iterate is replaced by its double
/// c-transform, which can only raise the dual.
///
/// The plain ascent stalls at kinks of the piecewise-linear discrete dual, so by
/// default it starts from an annealed entropic solution. Discrete potentials are
/// determined only up to about half a cell in their finite-difference gradient,
/// which bounds the accuracy of the returned map.
pub fn ot_solve_2d(mu: &Density2D, nu: &Density2D, cfg: &OtConfig) -> Result<OtSolution> {
    let (gm, gn) = (*mu.grid(), *nu.grid());
    gm.check_size()?;
    gn.check_size()?;
    if !(cfg.step > 0.0 && cfg.step.is_finite()) {
        return Err(Error::InvalidParameter(format!("step must be positive, got {}", cfg.step)));
    }
    let a = mu.masses();
    let b = nu.masses();
    if gm == gn && a.iter().zip(&b).all(|(x, y)| x.min(*y) == 0.0) {
        log::warn!("source and target supports do not overlap; solving the dual anyway");
    }
    let area = gm.cell_area();
    let ys: Vec<(f64, f64)> = (0..gn.len()).map(|j| gn.point(j)).collect();

    let mut phi = match &cfg.warm_start {
        Some(ws) => entropic_potential(&gm, &a, &gn, &b, ws),
        None => vec![0.0; gm.len()],
    };
    let mut phi_c = c_transform_values(&gm, &phi, &gn);
    phi = c_transform_values(&gn, &phi_c, &gm);
    let mut dual = dual_value(&a, &b, &phi, &phi_c);
    let mut trace = vec![dual];
    let mut step = cfg.step;
    let mut quiet = 0;
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..cfg.iters {
        iterations = it + 1;
        let grad_c = gn.gradient(&phi_c);
        let (sx, sy): (Vec<f64>, Vec<f64>) = ys.iter().zip(&grad_c).map(|(&(y1, y2), g)| (y1 - g[0], y2 - g[1])).unzip();
        let (pulled, _) = splat(&gm, &b, &sx, &sy);
        let g: Vec<f64> = a.iter().zip(&pulled).map(|(m, p)| (m - p) / area).collect();
        let dir = precondition(cfg.preconditioner, &gm, &g);
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = phi.iter().zip(&dir).map(|(p, d)| p + step * d).collect();
            let trial_c = c_transform_values(&gm, &trial, &gn);
            let trial_cc = c_transform_values(&gn, &trial_c, &gm);
            let val = dual_value(&a, &b, &trial_cc, &trial_c);
            if val >= dual {
                accepted = Some((trial_cc, trial_c, val));
                break;
            }
            step *= 0.5;
        }
        let Some((p, pc, val)) = accepted else {
            converged = true;
            break;
        };
        let gain = (val - dual) / dual.abs().max(1e-300);
        phi = p;
        phi_c = pc;
        dual = val;
        trace.push(dual);
        step *= 1.5;
        if gain < cfg.tol {
            quiet += 1;
            if quiet >= cfg.patience {
                converged = true;
                break;
            }
        } else {
            quiet = 0;
        }
    }
    let mut potential = Potential2D::new(gm, phi)?;
    potential.center(mu);
    let map = potential.map();
    Ok(OtSolution { potential, map, dual, dual_trace: trace, iterations, converged })
}

/// `W2(mu, nu)` from the dual value of [`ot_solve_2d`] with default settings.
pub fn w2_2d(mu: &Density2D, nu: &Density2D) -> Result<f64> {
    Ok(ot_solve_2d(mu, nu, &OtConfig::default())?.w2())
}

/// Pushes `reference` through `map` by bilinear mass splatting; points outside the hull are clamped.
pub fn pushforward_2d(reference: &Density2D, map: &TransportField2D) -> Result<Density2D> {
    let grid = *reference.grid();
    if map.grid != grid {
        return Err(Error::Dimension("map and reference live on different grids".into()));
    }
    let (masses, clamped) = splat(&grid, &reference.masses(), &map.tx, &map.ty);
    if clamped {
        log::warn!("pushforward: mapped points outside the grid hull were clamped");
    }
    let area = grid.cell_area();
    Density2D::new(grid, masses.into_iter().map(|m| m / area).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BarycenterConfig {
    pub iters: usize,
    /// Stop when the mean displacement is below this many cells everywhere on the support.
    pub tol_cells: f64,
    pub ot: OtConfig,
}

impl Default for BarycenterConfig {
    fn default() -> Self {
        Self { iters: 20, tol_cells: 1.0, ot: OtConfig::default() }
    }
}

/// Mean displacement field from `omega` to each of `ds`, and its sup-norm over cells with mass `> 1e-6`.
pub fn mean_displacement(omega: &Density2D, ds: &[Density2D], cfg: &OtConfig) -> Result<(Vec<[f64; 2]>, f64)> {
    let sols = par::map_slice(ds, |d| ot_solve_2d(omega, d, cfg));
    let n = ds.len() as f64;
    let mut mean = vec![[0.0; 2]; omega.grid().len()];
    for s in sols {
        for (acc, d) in mean.iter_mut().zip(s?.map.displacement()) {
            acc[0] += d[0] / n;
            acc[1] += d[1] / n;
        }
    }
    let masses = omega.masses();
    let sup = mean
        .iter()
        .zip(&masses)
        .filter(|(_, m)| **m > 1e-6)
        .map(|(d, _)| d[0].hypot(d[1]))
        .fold(0.0, f64::max);
    Ok((mean, sup))
}

/// Fixed-point barycenter `omega <- (mean_i T_{omega -> d_i})_# omega`, started at `ds[0]`.
pub fn barycenter_2d(ds: &[Density2D], cfg: &BarycenterConfig) -> Result<Density2D> {
    let first = ds.first().ok_or(Error::EmptyInput)?;
    let grid = *first.grid();
    if ds.iter().any(|d| *d.grid() != grid) {
        return Err(Error::Dimension("barycenter inputs live on different grids".into()));
    }
    if ds.iter().all(|d| d == first) {
        return Ok(first.clone());
    }
    let cell = grid.hx().min(grid.hy());
    let mut omega = first.clone();
    for _ in 0..cfg.iters {
        let (mean, sup) = mean_displacement(&omega, ds, &cfg.ot)?;
        if sup <= cfg.tol_cells * cell {
            break;
        }
        let (tx, ty) = (0..grid.len())
            .map(|i| {
                let (x, y) = grid.point(i);
                (x + mean[i][0], y + mean[i][1])
            })
            .unzip();
        omega = pushforward_2d(&omega, &TransportField2D { grid, tx, ty })?;
    }
    Ok(omega)
}
