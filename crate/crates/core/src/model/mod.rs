//! The regression model: parameters, feasibility constants, prediction and loss.

mod dataset;
mod nonfinite;
pub(crate) mod eval;
mod params;

use log::warn;
use serde::{Deserialize, Serialize};

pub use dataset::Dataset;
pub use params::{
    all_sign_configs, check_knot_span, circledcirc, format_signs, linspace, step_derivative_stats, PsiParams, Sign,
    SignConfig, Smoothing, StepParams,
};

use crate::error::{Error, Result};
use crate::grid::{cdf, Density1D, Grid1D};
use crate::ot1d::{ot_map, potential_from_map, pushforward, Potential1D, TransportMap1D, SUPPORT_EPS, W2_LEVELS};
use crate::par;

/// Curvature bounds at or below this are treated as zero. Potentials of pure translations
/// come out of the quantile pipeline with second derivatives of order 1e-8.
pub const CURVATURE_FLOOR: f64 = 1e-6;

/// Data-dependent constants of the feasibility inequality plus the parameter-class bounds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityConstants {
    pub eta: Vec<f64>,
    pub lambda: Vec<f64>,
    pub gamma_minus: Vec<f64>,
    pub gamma_plus: Vec<f64>,
    pub l_bounds: Vec<f64>,
    pub kappa1: Vec<f64>,
    /// Infinite for exact step functions.
    #[serde(with = "nonfinite")]
    pub kappa2: Vec<f64>,
    pub rho: Vec<f64>,
}

impl FeasibilityConstants {
    /// Largest uniform `kappa1` for a linear `f` of each sign: `1 / gamma`.
    /// `None` means unbounded: `gamma` is zero up to [`CURVATURE_FLOOR`].
    pub fn max_linear_kappa1(&self, j: usize) -> (Option<f64>, Option<f64>) {
        let inv = |g: f64| if g > CURVATURE_FLOOR { Some(1.0 / g) } else { None };
        (inv(self.gamma_plus[j]), inv(self.gamma_minus[j]))
    }

    /// Fills `kappa1`, `kappa2` and `rho` from concrete parameters; `rho` is measured on `grid`.
    pub fn with_parameters(mut self, steps: &[StepParams], psis: &[PsiParams], grid: &Grid1D) -> Self {
        let stats: Vec<(f64, f64)> = steps.iter().map(|f| step_derivative_stats(f, f.span())).collect();
        self.kappa1 = stats.iter().map(|s| s.0).collect();
        self.kappa2 = stats.iter().map(|s| s.1).collect();
        self.rho = psis.iter().map(|p| p.curvature_bound(grid)).collect();
        self
    }
}

/// `eta`, `lambda`, `gamma_-`, `gamma_+` per predictor and `l` per covariate;
/// the parameter bounds are left at zero.
pub fn estimate_constants(data: &Dataset) -> FeasibilityConstants {
    let n = data.n();
    let (p, q) = (data.p(), data.q());
    let support: Vec<bool> = data.nu_bar().values().iter().map(|v| *v > SUPPORT_EPS).collect();
    let mut c = FeasibilityConstants {
        eta: vec![0.0; p],
        lambda: vec![0.0; p],
        gamma_minus: vec![0.0; p],
        gamma_plus: vec![0.0; p],
        l_bounds: vec![0.0; q],
        kappa1: vec![0.0; p],
        kappa2: vec![0.0; p],
        rho: vec![0.0; q],
    };
    for j in 0..p {
        let firsts: Vec<Vec<f64>> = (0..n).map(|i| data.potential(i, j).deriv.iter().map(|d| d * d).collect()).collect();
        let seconds: Vec<Vec<f64>> = (0..n)
            .map(|i| data.potential(i, j).second_derivative().iter().map(|d| d * d).collect())
            .collect();
        let s1 = par::pairwise_sum_rows(&firsts);
        let s2 = par::pairwise_sum_rows(&seconds);
        for m in 0..support.len() {
            if support[m] {
                c.eta[j] = c.eta[j].max(s1[m] / n as f64);
                c.lambda[j] = c.lambda[j].max((s2[m] / n as f64).sqrt());
            }
        }
        for i in 0..n {
            let (gm, gp) = data.potential(i, j).curvature_bounds(data.nu_bar());
            c.gamma_minus[j] = c.gamma_minus[j].max(gm);
            c.gamma_plus[j] = c.gamma_plus[j].max(gp);
        }
    }
    for k in 0..q {
        c.l_bounds[k] = (0..n).map(|i| data.z_hat(i, k).abs()).fold(0.0, f64::max);
    }
    c
}

/// `slack = 1 - [(gamma_delta + lambda)' kappa1 + eta' kappa2 + l' rho]`, `ok = slack >= 0`.
///
/// A zero coefficient times an unbounded `kappa2` counts as zero.
pub fn check_feasibility(c: &FeasibilityConstants, delta: &[Sign]) -> Result<(bool, f64)> {
    let p = delta.len();
    let arrays = [&c.eta, &c.lambda, &c.gamma_minus, &c.gamma_plus, &c.kappa1, &c.kappa2];
    if arrays.iter().any(|a| a.len() != p) {
        return Err(Error::Dimension(format!("constants do not match {p} sign entries")));
    }
    if c.l_bounds.len() != c.rho.len() {
        return Err(Error::Dimension(format!("{} covariate bounds vs {} rho", c.l_bounds.len(), c.rho.len())));
    }
    let prod = |a: f64, b: f64| if a == 0.0 || b == 0.0 { 0.0 } else { a * b };
    let mut lhs = 0.0;
    for j in 0..p {
        let gamma = match delta[j] {
            Sign::Plus => c.gamma_plus[j],
            Sign::Minus => c.gamma_minus[j],
        };
        lhs += prod(gamma + c.lambda[j], c.kappa1[j]) + prod(c.eta[j], c.kappa2[j]);
    }
    for k in 0..c.rho.len() {
        lhs += prod(c.l_bounds[k], c.rho[k]);
    }
    let slack = 1.0 - lhs;
    Ok((slack >= 0.0, slack))
}

/// A fitted (or hand-built) model with frozen intercepts and covariate means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub p: usize,
    pub q: usize,
    pub grid: Grid1D,
    pub sign_config: SignConfig,
    pub step_params: Vec<StepParams>,
    pub psi_params: Vec<PsiParams>,
    pub constants: FeasibilityConstants,
    /// `(1/n) sum_r f_j (*) phi_r^j` on the training set.
    pub intercepts: Vec<Potential1D>,
    pub z_means: Vec<f64>,
    pub nu_bar: Density1D,
    pub mu_bars: Vec<Density1D>,
}

impl ModelSpec {
    /// Freezes parameters against a training set: intercepts, covariate means, references, constants.
    pub fn from_params(data: &Dataset, step_params: Vec<StepParams>, psi_params: Vec<PsiParams>) -> Result<Self> {
        if step_params.len() != data.p() || psi_params.len() != data.q() {
            return Err(Error::Dimension(format!(
                "model has {}+{} parameters, data has p = {}, q = {}",
                step_params.len(),
                psi_params.len(),
                data.p(),
                data.q()
            )));
        }
        for f in &step_params {
            f.validate()?;
        }
        let n = data.n();
        let grid = *data.grid();
        let mut intercepts = Vec::with_capacity(data.p());
        for (j, f) in step_params.iter().enumerate() {
            let comps = (0..n)
                .map(|i| {
                    if data.is_degenerate(j) {
                        Ok(Potential1D::zero(grid))
                    } else {
                        circledcirc(f, data.potential(i, j))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            let vals: Vec<Vec<f64>> = comps.iter().map(|c| c.values.clone()).collect();
            let ders: Vec<Vec<f64>> = comps.into_iter().map(|c| c.deriv).collect();
            let scale = 1.0 / n as f64;
            intercepts.push(Potential1D {
                grid,
                values: par::pairwise_sum_rows(&vals).into_iter().map(|v| v * scale).collect(),
                deriv: par::pairwise_sum_rows(&ders).into_iter().map(|v| v * scale).collect(),
            });
        }
        let constants = estimate_constants(data).with_parameters(&step_params, &psi_params, data.grid());
        Ok(Self {
            p: data.p(),
            q: data.q(),
            grid,
            sign_config: step_params.iter().map(|f| f.sign).collect(),
            step_params,
            psi_params,
            constants,
            intercepts,
            z_means: data.z_means().to_vec(),
            nu_bar: data.nu_bar().clone(),
            mu_bars: data.mu_bars().to_vec(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.step_params.len() != self.p
            || self.sign_config.len() != self.p
            || self.intercepts.len() != self.p
            || self.mu_bars.len() != self.p
            || self.psi_params.len() != self.q
            || self.z_means.len() != self.q
        {
            return Err(Error::Dimension("model arrays disagree with (p, q)".into()));
        }
        for (f, s) in self.step_params.iter().zip(&self.sign_config) {
            f.validate()?;
            if f.sign != *s {
                return Err(Error::InvalidParameter("step sign differs from sign configuration".into()));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }

    /// Feasibility of the stored parameters under the stored constants.
    pub fn feasibility(&self) -> Result<(bool, f64)> {
        check_feasibility(&self.constants, &self.sign_config)
    }
}

/// The fitted potential `Phi` and its map `T = id - Phi'` for new inputs, without pushing forward.
pub fn predict_map(
    model: &ModelSpec,
    dist_preds: &[Density1D],
    scalar_preds: &[f64],
    nu_bar: &Density1D,
    mu_bars: &[Density1D],
) -> Result<(TransportMap1D, Potential1D)> {
    if dist_preds.len() != model.p || mu_bars.len() != model.p || scalar_preds.len() != model.q {
        return Err(Error::Dimension(format!(
            "model expects p = {}, q = {}; got {} predictors, {} references, {} scalars",
            model.p,
            model.q,
            dist_preds.len(),
            mu_bars.len(),
            scalar_preds.len()
        )));
    }
    let grid = *nu_bar.grid();
    let nodes = grid.nodes();
    let mut values = vec![0.0; grid.n];
    let mut deriv = vec![0.0; grid.n];
    for j in 0..model.p {
        let phi = if dist_preds[j].values() == mu_bars[j].values() {
            Potential1D::zero(grid)
        } else {
            potential_from_map(&ot_map(&mu_bars[j], &dist_preds[j])?, &mu_bars[j])?
        };
        let comp = if phi.deriv.iter().all(|d| *d == 0.0) {
            Potential1D::zero(grid)
        } else {
            circledcirc(&model.step_params[j], &phi)?
        };
        let icpt = &model.intercepts[j];
        for m in 0..grid.n {
            values[m] += comp.values[m] - icpt.values[m];
            deriv[m] += comp.deriv[m] - icpt.deriv[m];
        }
    }
    for k in 0..model.q {
        let z = scalar_preds[k] - model.z_means[k];
        if z != 0.0 {
            let psi = &model.psi_params[k];
            for m in 0..grid.n {
                values[m] += z * psi.value(nodes[m]);
                deriv[m] += z * psi.deriv(nodes[m]);
            }
        }
    }
    let mut phi = Potential1D { grid, values, deriv };
    phi.center(nu_bar);
    Ok((phi.map(), phi))
}

/// Predicted response `(T_Phi)_# nu_bar` and the fitted potential `Phi`.
pub fn predict(
    model: &ModelSpec,
    dist_preds: &[Density1D],
    scalar_preds: &[f64],
    nu_bar: &Density1D,
    mu_bars: &[Density1D],
) -> Result<(Density1D, Potential1D)> {
    let (map, phi) = predict_map(model, dist_preds, scalar_preds, nu_bar, mu_bars)?;
    map.check_monotone_on(nu_bar)?;
    Ok((pushforward(nu_bar, &map)?, phi))
}

/// How the empirical loss is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    /// Residual form `integral (T_{nu_bar -> nu_i} - T_{Phi_i})^2 d nu_bar`.
    Quadratic,
    /// `W2^2(nu_i, (T_{Phi_i})_# nu_bar)`.
    Exact,
}

impl std::str::FromStr for LossMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quadratic" => Ok(LossMode::Quadratic),
            "exact" => Ok(LossMode::Exact),
            other => Err(Error::Parse(format!("unknown loss mode {other:?}"))),
        }
    }
}

/// Model maps `T_{Phi_i}` on the training records, intercepts taken from `data`.
pub fn fitted_maps(model: &ModelSpec, data: &Dataset) -> Result<Vec<TransportMap1D>> {
    let prob = eval::Problem::new(data, &model.step_params, &model.psi_params)?;
    let (theta, vartheta) = split_params(model);
    let grid = *data.grid();
    Ok(prob
        .model_maps(&theta, &vartheta)
        .into_iter()
        .map(|values| TransportMap1D { grid, values })
        .collect())
}

pub(crate) fn split_params(model: &ModelSpec) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    (
        model.step_params.iter().map(|f| f.theta.clone()).collect(),
        model.psi_params.iter().map(|p| p.vartheta.clone()).collect(),
    )
}

/// Empirical loss of the model's parameters on `data`.
///
/// Intercepts are recomputed from `data` (the fitting objective), so on the training
/// set this agrees with the frozen ones. In exact mode a non-monotone map is logged
/// and its pushforward is taken as the law of `T(X)` all the same.
pub fn empirical_loss(model: &ModelSpec, data: &Dataset, mode: LossMode) -> Result<f64> {
    let prob = eval::Problem::new(data, &model.step_params, &model.psi_params)?;
    let (theta, vartheta) = split_params(model);
    match mode {
        LossMode::Quadratic => Ok(prob.loss(&prob.residuals(&theta, &vartheta))),
        LossMode::Exact => {
            let maps = prob.model_maps(&theta, &vartheta);
            let grid = *data.grid();
            let us: Vec<f64> = (0..W2_LEVELS).map(|k| (k as f64 + 0.5) / W2_LEVELS as f64).collect();
            let qbar = cdf(data.nu_bar()).quantiles_sorted(&us);
            let per = par::map_indexed(data.n(), |i| {
                let t = TransportMap1D { grid, values: maps[i].clone() };
                if let Some(node) = t.first_violation_on(data.nu_bar()) {
                    warn!("record {i}: fitted map decreases at node {node}");
                }
                let mut pushed: Vec<f64> = qbar.iter().map(|x| t.eval(*x)).collect();
                pushed.sort_by(f64::total_cmp);
                let qi = cdf(&data.responses()[i]).quantiles_sorted(&us);
                let sq: Vec<f64> = qi.iter().zip(&pushed).map(|(a, b)| (a - b) * (a - b)).collect();
                par::pairwise_sum(&sq) / W2_LEVELS as f64
            });
            Ok(par::pairwise_sum(&per) / data.n() as f64)
        }
    }
}
