//! Uniform 1D grids, densities on them, CDFs and quantiles, and Gaussian KDE.
//!
//! Every integral in the 1D code is a trapezoid rule on the grid nodes, so a
//! density is read as the piecewise-linear interpolant of its node values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid on `[lo, hi]` with `n` nodes, `node(i) = lo + i * h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Grid1D {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
            return Err(Error::InvalidGrid(format!("need lo < hi, got [{lo}, {hi}]")));
        }
        if n < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 nodes, got {n}")));
        }
        Ok(Self { lo, hi, n })
    }

    /// Unit interval with `n` nodes.
    pub fn unit(n: usize) -> Self {
        Self::new(0.0, 1.0, n).expect("valid unit grid")
    }

    #[inline]
    pub fn h(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.hi
        } else {
            self.lo + i as f64 * self.h()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    /// Trapezoid quadrature weights.
    pub fn trapz_weights(&self) -> Vec<f64> {
        let h = self.h();
        let mut w = vec![h; self.n];
        w[0] = 0.5 * h;
        w[self.n - 1] = 0.5 * h;
        w
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.n);
        let h = self.h();
        let inner: f64 = values[1..self.n - 1].iter().sum();
        h * (inner + 0.5 * (values[0] + values[self.n - 1]))
    }

    /// Cumulative trapezoid integral starting at 0.
    pub fn cumulative(&self, values: &[f64]) -> Vec<f64> {
        let h = self.h();
        let mut out = Vec::with_capacity(self.n);
        let mut acc = 0.0;
        out.push(0.0);
        for w in values.windows(2) {
            acc += 0.5 * h * (w[0] + w[1]);
            out.push(acc);
        }
        out
    }

    /// Same interval (node counts may differ).
    pub fn same_domain(&self, other: &Grid1D) -> bool {
        let scale = (self.hi - self.lo).abs().max(1.0);
        (self.lo - other.lo).abs() <= 1e-12 * scale && (self.hi - other.hi).abs() <= 1e-12 * scale
    }

    /// Cell index `i` and fraction `t` with `x = node(i) + t h`, clamped to the grid.
    #[inline]
    pub fn locate(&self, x: f64) -> (usize, f64) {
        let s = (x - self.lo) / self.h();
        if s <= 0.0 {
            return (0, 0.0);
        }
        let last = (self.n - 2) as f64;
        if s >= last + 1.0 {
            return (self.n - 2, 1.0);
        }
        let i = s.floor().min(last);
        (i as usize, s - i)
    }

    /// Linear interpolation of node values at `x` (clamped at the ends).
    pub fn interp(&self, values: &[f64], x: f64) -> f64 {
        let (i, t) = self.locate(x);
        values[i] * (1.0 - t) + values[i + 1] * t
    }
}

/// Nonnegative density sampled at grid nodes with unit trapezoid mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Density1D {
    grid: Grid1D,
    values: Vec<f64>,
}

impl Density1D {
    /// Builds a density from nonnegative node values, normalizing to unit mass.
    pub fn new(grid: Grid1D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n {
            return Err(Error::Dimension(format!(
                "density has {} values for a {}-node grid",
                values.len(),
                grid.n
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidDensity(format!("bad node value {v}")));
        }
        let mass = grid.integrate(&values);
        if !(mass > 0.0) {
            return Err(Error::InvalidDensity("zero total mass".into()));
        }
        let values = values.into_iter().map(|v| v / mass).collect();
        Ok(Self { grid, values })
    }

    /// Density of `f` evaluated at the nodes.
    pub fn from_fn(grid: Grid1D, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.nodes().into_iter().map(f).collect())
    }

    /// Uniform density on the whole grid.
    pub fn uniform(grid: Grid1D) -> Self {
        let w = 1.0 / (grid.hi - grid.lo);
        Self { grid, values: vec![w; grid.n] }
    }

    /// Normal(mean, sd) truncated to the grid interval.
    pub fn truncated_normal(grid: Grid1D, mean: f64, sd: f64) -> Result<Self> {
        if !(sd > 0.0) {
            return Err(Error::InvalidParameter(format!("sd must be positive, got {sd}")));
        }
        Self::from_fn(grid, |x| {
            let z = (x - mean) / sd;
            (-0.5 * z * z).exp()
        })
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mass(&self) -> f64 {
        self.grid.integrate(&self.values)
    }

    pub fn mean(&self) -> f64 {
        let xv: Vec<f64> = self
            .grid
            .nodes()
            .iter()
            .zip(&self.values)
            .map(|(x, v)| x * v)
            .collect();
        self.grid.integrate(&xv)
    }

    /// Trapezoid integral of `g` against this density.
    pub fn expect(&self, g: &[f64]) -> f64 {
        let gv: Vec<f64> = g.iter().zip(&self.values).map(|(a, b)| a * b).collect();
        self.grid.integrate(&gv)
    }

    /// Quadrature weights `w_i` with `sum_i w_i g(x_i) = integral of g against this density`.
    pub fn quadrature_weights(&self) -> Vec<f64> {
        self.grid
            .trapz_weights()
            .into_iter()
            .zip(&self.values)
            .map(|(w, v)| w * v)
            .collect()
    }

    pub fn cdf(&self) -> Cdf1D {
        cdf(self)
    }
}

/// Nondecreasing CDF at grid nodes, pinned to 0 and 1 at the ends.
#[derive(Debug, Clone, PartialEq)]
pub struct Cdf1D {
    grid: Grid1D,
    values: Vec<f64>,
}

impl Cdf1D {
    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Linear interpolation of the CDF at `x`.
    pub fn eval(&self, x: f64) -> f64 {
        if x <= self.grid.lo {
            return 0.0;
        }
        if x >= self.grid.hi {
            return 1.0;
        }
        self.grid.interp(&self.values, x)
    }

    /// Piecewise-linear inverse. Flat stretches resolve to their left end.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::LevelOutOfRange(u));
        }
        Ok(self.quantile_unchecked(u))
    }

    /// As [`Cdf1D::quantile`] with `u` clamped into `[0, 1]`.
    pub fn quantile_unchecked(&self, u: f64) -> f64 {
        let v = &self.values;
        // first index with F >= u
        let k = v.partition_point(|&f| f < u);
        if k == 0 {
            return self.grid.lo;
        }
        if k >= v.len() {
            return self.grid.hi;
        }
        let (f0, f1) = (v[k - 1], v[k]);
        let x0 = self.grid.node(k - 1);
        let t = if f1 > f0 { (u - f0) / (f1 - f0) } else { 1.0 };
        x0 + t * self.grid.h()
    }

    /// Quantiles at an increasing sequence of levels, in one sweep.
    pub fn quantiles_sorted(&self, us: &[f64]) -> Vec<f64> {
        let v = &self.values;
        let h = self.grid.h();
        let mut k = 0usize;
        us.iter()
            .map(|&u| {
                while k < v.len() && v[k] < u {
                    k += 1;
                }
                if k == 0 {
                    self.grid.lo
                } else if k >= v.len() {
                    self.grid.hi
                } else {
                    let (f0, f1) = (v[k - 1], v[k]);
                    let t = if f1 > f0 { (u - f0) / (f1 - f0) } else { 1.0 };
                    self.grid.node(k - 1) + t * h
                }
            })
            .collect()
    }
}

/// Cumulative trapezoid integral, clamped monotone with pinned endpoints.
pub fn cdf(d: &Density1D) -> Cdf1D {
    let grid = *d.grid();
    let mut values = grid.cumulative(d.values());
    let total = *values.last().unwrap();
    let mut run = 0.0f64;
    for v in values.iter_mut() {
        run = run.max((*v / total).clamp(0.0, 1.0));
        *v = run;
    }
    values[0] = 0.0;
    *values.last_mut().unwrap() = 1.0;
    Cdf1D { grid, values }
}

pub fn quantile(c: &Cdf1D, u: f64) -> Result<f64> {
    c.quantile(u)
}

/// Gaussian KDE at the grid nodes, renormalized to unit mass on the grid.
///
/// Kernel mass falling outside `[lo, hi]` is discarded and the rest rescaled.
pub fn density_from_samples(samples: &[f64], grid: Grid1D, bandwidth: f64) -> Result<Density1D> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::InvalidBandwidth(bandwidth));
    }
    if let Some(s) = samples.iter().find(|s| !s.is_finite()) {
        return Err(Error::InvalidParameter(format!("non-finite sample {s}")));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let inv = 1.0 / bandwidth;
    let nodes = grid.nodes();
    let values = crate::par::map_slice(&nodes, |&x| {
        let terms: Vec<f64> = sorted
            .iter()
            .map(|&s| {
                let z = (x - s) * inv;
                (-0.5 * z * z).exp()
            })
            .collect();
        crate::par::pairwise_sum(&terms)
    });
    Density1D::new(grid, values)
}
