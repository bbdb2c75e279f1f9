use log::warn;

use crate::error::{Error, Result};
use crate::grid::{Density1D, Grid1D};
use crate::ot1d::{barycenter, ot_map, potential_from_map, Potential1D, TransportMap1D};
use crate::par;

/// Potentials whose derivative never exceeds this are treated as identically zero.
const DEGENERATE_TOL: f64 = 1e-8;

/// Training records plus the cached barycenters, predictor potentials and response maps.
///
/// Immutable after construction.
#[derive(Debug, Clone)]
pub struct Dataset {
    grid: Grid1D,
    responses: Vec<Density1D>,
    predictors: Vec<Vec<Density1D>>,
    scalars: Vec<Vec<f64>>,
    nu_bar: Density1D,
    mu_bars: Vec<Density1D>,
    potentials: Vec<Vec<Potential1D>>,
    response_maps: Vec<TransportMap1D>,
    z_means: Vec<f64>,
}

fn check_shapes(responses: &[Density1D], predictors: &[Vec<Density1D>], scalars: &[Vec<f64>]) -> Result<(Grid1D, usize, usize)> {
    let n = responses.len();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    if predictors.len() != n || scalars.len() != n {
        return Err(Error::Dimension(format!(
            "{n} responses, {} predictor rows, {} scalar rows",
            predictors.len(),
            scalars.len()
        )));
    }
    let p = predictors[0].len();
    let q = scalars[0].len();
    if predictors.iter().any(|r| r.len() != p) || scalars.iter().any(|r| r.len() != q) {
        return Err(Error::Dimension("records disagree on predictor arity".into()));
    }
    let grid = *responses[0].grid();
    let all = responses.iter().chain(predictors.iter().flatten());
    for d in all {
        if d.grid() != &grid {
            return Err(Error::Dimension("all densities must share one grid".into()));
        }
    }
    Ok((grid, p, q))
}

fn is_constant_family(ds: &[&Density1D]) -> bool {
    ds.windows(2).all(|w| w[0].values() == w[1].values())
}

impl Dataset {
    /// Builds the cache from raw densities: empirical barycenters, centered potentials
    /// `phi_{mu_bar^j -> mu_i^j}`, and response maps `T_{nu_bar -> nu_i}`.
    pub fn new(responses: Vec<Density1D>, predictors: Vec<Vec<Density1D>>, scalars: Vec<Vec<f64>>) -> Result<Self> {
        let (_, p, _) = check_shapes(&responses, &predictors, &scalars)?;
        let refs: Vec<&Density1D> = responses.iter().collect();
        let nu_bar = if is_constant_family(&refs) { responses[0].clone() } else { barycenter(&responses, None)? };
        let mut mu_bars = Vec::with_capacity(p);
        for j in 0..p {
            let col: Vec<&Density1D> = predictors.iter().map(|r| &r[j]).collect();
            if is_constant_family(&col) {
                mu_bars.push(col[0].clone());
            } else {
                let owned: Vec<Density1D> = col.into_iter().cloned().collect();
                mu_bars.push(barycenter(&owned, None)?);
            }
        }
        Self::with_references(responses, predictors, scalars, nu_bar, mu_bars)
    }

    /// As [`Dataset::new`] but with the reference measures supplied.
    pub fn with_references(
        responses: Vec<Density1D>,
        predictors: Vec<Vec<Density1D>>,
        scalars: Vec<Vec<f64>>,
        nu_bar: Density1D,
        mu_bars: Vec<Density1D>,
    ) -> Result<Self> {
        let (grid, p, _) = check_shapes(&responses, &predictors, &scalars)?;
        if mu_bars.len() != p {
            return Err(Error::Dimension(format!("{} reference measures for {p} predictors", mu_bars.len())));
        }
        let potentials = par::map_slice(&predictors, |row| {
            row.iter()
                .zip(&mu_bars)
                .map(|(mu, bar)| {
                    if mu.values() == bar.values() {
                        return Ok(Potential1D::zero(grid));
                    }
                    let t = ot_map(bar, mu)?;
                    potential_from_map(&t, bar)
                })
                .collect::<Result<Vec<_>>>()
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        Self::from_parts(responses, predictors, scalars, nu_bar, mu_bars, potentials)
    }

    /// Assembles a dataset from precomputed potentials (`potentials[i][j]`), e.g. closed-form ones.
    pub fn from_parts(
        responses: Vec<Density1D>,
        predictors: Vec<Vec<Density1D>>,
        scalars: Vec<Vec<f64>>,
        nu_bar: Density1D,
        mu_bars: Vec<Density1D>,
        potentials: Vec<Vec<Potential1D>>,
    ) -> Result<Self> {
        let (grid, p, q) = check_shapes(&responses, &predictors, &scalars)?;
        let n = responses.len();
        if nu_bar.grid() != &grid || mu_bars.iter().any(|m| m.grid() != &grid) {
            return Err(Error::Dimension("reference measures must share the data grid".into()));
        }
        if mu_bars.len() != p || potentials.len() != n || potentials.iter().any(|r| r.len() != p) {
            return Err(Error::Dimension("potentials must be n x p".into()));
        }
        if potentials.iter().flatten().any(|ph| ph.grid != grid) {
            return Err(Error::Dimension("potentials must share the data grid".into()));
        }
        let response_maps = par::map_slice(&responses, |nu| {
            if nu.values() == nu_bar.values() {
                Ok(TransportMap1D::identity(grid))
            } else {
                ot_map(&nu_bar, nu)
            }
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let z_means = (0..q)
            .map(|k| {
                let col: Vec<f64> = scalars.iter().map(|r| r[k]).collect();
                par::pairwise_sum(&col) / n as f64
            })
            .collect();
        let data = Self { grid, responses, predictors, scalars, nu_bar, mu_bars, potentials, response_maps, z_means };
        for j in 0..p {
            if data.is_degenerate(j) {
                warn!("predictor {j} does not vary across records; its coefficients are not identifiable");
            }
        }
        Ok(data)
    }

    pub fn n(&self) -> usize {
        self.responses.len()
    }

    pub fn p(&self) -> usize {
        self.mu_bars.len()
    }

    pub fn q(&self) -> usize {
        self.z_means.len()
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn responses(&self) -> &[Density1D] {
        &self.responses
    }

    /// Distributional predictors of record `i`.
    pub fn predictors(&self, i: usize) -> &[Density1D] {
        &self.predictors[i]
    }

    /// Scalar covariates of record `i`.
    pub fn scalars(&self, i: usize) -> &[f64] {
        &self.scalars[i]
    }

    pub fn nu_bar(&self) -> &Density1D {
        &self.nu_bar
    }

    pub fn mu_bars(&self) -> &[Density1D] {
        &self.mu_bars
    }

    pub fn potential(&self, i: usize, j: usize) -> &Potential1D {
        &self.potentials[i][j]
    }

    /// `T_{nu_bar -> nu_i}`.
    pub fn response_map(&self, i: usize) -> &TransportMap1D {
        &self.response_maps[i]
    }

    pub fn z_means(&self) -> &[f64] {
        &self.z_means
    }

    /// Centered covariate `X_i^k - mean_k`.
    pub fn z_hat(&self, i: usize, k: usize) -> f64 {
        self.scalars[i][k] - self.z_means[k]
    }

    /// True when predictor `j` carries no displacement in any record.
    pub fn is_degenerate(&self, j: usize) -> bool {
        self.potentials.iter().all(|r| r[j].deriv.iter().all(|d| d.abs() <= DEGENERATE_TOL))
    }

    /// `(min, max)` of `phi_i^j` over records and nodes.
    pub fn potential_range(&self, j: usize) -> (f64, f64) {
        self.potentials.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| {
            let (lo, hi) = r[j].range();
            (a.min(lo), b.max(hi))
        })
    }
}
