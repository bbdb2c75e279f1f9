//! Kantorovich regression with two-dimensional distributional predictors.

use super::solve::{barycenter_2d, ot_solve_2d, pushforward_2d, BarycenterConfig, OtConfig};
use super::{Density2D, Grid2D, Potential2D, TransportField2D};
use crate::error::{Error, Result};
use crate::fit::MAX_SIGN_PREDICTORS;
use crate::model::{all_sign_configs, format_signs, linspace, Sign, SignConfig, StepParams};
use crate::par;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Mass below this (relative to the largest cell) counts as outside the support.
const SUPPORT_REL: f64 = 1e-9;

fn support_mask(d: &Density2D) -> Vec<bool> {
    let max = d.values().iter().cloned().fold(0.0, f64::max);
    d.values().iter().map(|v| *v > SUPPORT_REL * max).collect()
}

fn span_error(f: &StepParams, (mut min, mut max): (f64, f64)) -> Result<()> {
    let (lo, hi) = f.span();
    if f.sign == Sign::Minus {
        (min, max) = (-max, -min);
    }
    let tol = 1e-12 * (1.0 + (hi - lo).abs());
    if min < lo - tol || max > hi + tol {
        return Err(Error::KnotSpan { min, max, lo, hi });
    }
    Ok(())
}

/// `f (*) phi` on a 2D grid: values `s f(s phi)`, gradient `f'(s phi) grad phi`.
pub fn circledcirc_2d(f: &StepParams, phi: &Potential2D) -> Result<Potential2D> {
    span_error(f, phi.range())?;
    Ok(scaled_potential(f, phi))
}

/// [`circledcirc_2d`] with the span checked only where `reference` carries mass.
pub fn circledcirc_2d_on(f: &StepParams, phi: &Potential2D, reference: &Density2D) -> Result<Potential2D> {
    span_error(f, phi.range_on(reference, SUPPORT_REL * reference.values().iter().cloned().fold(0.0, f64::max)))?;
    Ok(scaled_potential(f, phi))
}

/// [`circledcirc_2d`] without the span check; outside the knots the step function saturates.
fn scaled_potential(f: &StepParams, phi: &Potential2D) -> Potential2D {
    let s = f.sign.factor();
    let values = phi.values.iter().map(|&v| s * f.f(s * v)).collect();
    let grad = phi
        .values
        .iter()
        .zip(&phi.grad)
        .map(|(&v, g)| {
            let d = f.fprime(s * v);
            [d * g[0], d * g[1]]
        })
        .collect();
    Potential2D { grid: phi.grid, values, grad }
}

/// Training data for the 2D model: responses, predictors, reference barycenters and predictor potentials.
#[derive(Debug, Clone)]
pub struct Dataset2D {
    grid: Grid2D,
    responses: Vec<Density2D>,
    predictors: Vec<Vec<Density2D>>,
    nu_bar: Density2D,
    mu_bars: Vec<Density2D>,
    potentials: Vec<Vec<Potential2D>>,
}

impl Dataset2D {
    /// Computes the barycenters of every family and the potentials `phi_i^j` from `mu_bar^j` to `mu_i^j`.
    pub fn new(
        responses: Vec<Density2D>,
        predictors: Vec<Vec<Density2D>>,
        bary: &BarycenterConfig,
    ) -> Result<Self> {
        let n = responses.len();
        if n == 0 || predictors.len() != n {
            return Err(Error::Dimension(format!("{} responses but {} predictor rows", n, predictors.len())));
        }
        let p = predictors[0].len();
        if p == 0 || predictors.iter().any(|r| r.len() != p) {
            return Err(Error::Dimension("every record needs the same number (>= 1) of predictors".into()));
        }
        let nu_bar = barycenter_2d(&responses, bary)?;
        let mu_bars = (0..p)
            .map(|j| {
                let fam: Vec<Density2D> = predictors.iter().map(|r| r[j].clone()).collect();
                barycenter_2d(&fam, bary)
            })
            .collect::<Result<Vec<_>>>()?;
        let potentials = predictor_potentials(&predictors, &mu_bars, &bary.ot)?;
        Self::from_parts(responses, predictors, nu_bar, mu_bars, potentials)
    }

    /// Assembles a dataset from precomputed references and potentials.
    pub fn from_parts(
        responses: Vec<Density2D>,
        predictors: Vec<Vec<Density2D>>,
        nu_bar: Density2D,
        mu_bars: Vec<Density2D>,
        potentials: Vec<Vec<Potential2D>>,
    ) -> Result<Self> {
        let grid = *nu_bar.grid();
        grid.check_size()?;
        let n = responses.len();
        let p = mu_bars.len();
        let same = |g: &Grid2D| *g == grid;
        if !responses.iter().all(|d| same(d.grid()))
            || !predictors.iter().flatten().all(|d| same(d.grid()))
            || !mu_bars.iter().all(|d| same(d.grid()))
            || !potentials.iter().flatten().all(|d| same(&d.grid))
        {
            return Err(Error::Dimension("all 2D inputs must share one grid".into()));
        }
        if predictors.len() != n || potentials.len() != n || potentials.iter().any(|r| r.len() != p) {
            return Err(Error::Dimension("predictor and potential tables must be n x p".into()));
        }
        Ok(Self { grid, responses, predictors, nu_bar, mu_bars, potentials })
    }

    pub fn n(&self) -> usize {
        self.responses.len()
    }

    pub fn p(&self) -> usize {
        self.mu_bars.len()
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn responses(&self) -> &[Density2D] {
        &self.responses
    }

    pub fn predictors(&self, i: usize) -> &[Density2D] {
        &self.predictors[i]
    }

    pub fn nu_bar(&self) -> &Density2D {
        &self.nu_bar
    }

    pub fn mu_bars(&self) -> &[Density2D] {
        &self.mu_bars
    }

    pub fn potential(&self, i: usize, j: usize) -> &Potential2D {
        &self.potentials[i][j]
    }

    /// Range of `phi_i^j` over the support of `nu_bar`, across records.
    pub fn potential_range(&self, j: usize) -> (f64, f64) {
        let mask = support_mask(&self.nu_bar);
        let mut out = (f64::INFINITY, f64::NEG_INFINITY);
        for row in &self.potentials {
            for (v, m) in row[j].values.iter().zip(&mask) {
                if *m {
                    out = (out.0.min(*v), out.1.max(*v));
                }
            }
        }
        out
    }
}

fn predictor_potentials(
    predictors: &[Vec<Density2D>],
    mu_bars: &[Density2D],
    ot: &OtConfig,
) -> Result<Vec<Vec<Potential2D>>> {
    par::map_slice(predictors, |row| {
        row.iter()
            .zip(mu_bars)
            .map(|(mu, bar)| Ok(ot_solve_2d(bar, mu, ot)?.potential))
            .collect::<Result<Vec<_>>>()
    })
    .into_iter()
    .collect()
}

/// A fitted 2D model: scaling functions plus the frozen training-time intercepts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Model2D {
    pub grid: Grid2D,
    pub step_params: Vec<StepParams>,
    /// `(1/n) sum_i f_j (*) phi_i^j` at fit time, one per predictor.
    pub intercepts: Vec<Potential2D>,
    pub nu_bar: Density2D,
    pub mu_bars: Vec<Density2D>,
}

impl Model2D {
    /// Model map `x - grad Phi(x)` for the given predictor potentials.
    pub fn map_for(&self, potentials: &[&Potential2D]) -> TransportField2D {
        let g = self.grid;
        let mut grad = vec![[0.0; 2]; g.len()];
        for ((f, phi), icpt) in self.step_params.iter().zip(potentials).zip(&self.intercepts) {
            let sp = scaled_potential(f, phi);
            for ((acc, a), b) in grad.iter_mut().zip(&sp.grad).zip(&icpt.grad) {
                acc[0] += a[0] - b[0];
                acc[1] += a[1] - b[1];
            }
        }
        displaced(&g, &grad)
    }
}

fn displaced(g: &Grid2D, grad: &[[f64; 2]]) -> TransportField2D {
    let (tx, ty) = (0..g.len())
        .map(|i| {
            let (x, y) = g.point(i);
            (x - grad[i][0], y - grad[i][1])
        })
        .unzip();
    TransportField2D { grid: *g, tx, ty }
}

fn mean_scaled(f: &StepParams, data: &Dataset2D, j: usize) -> Potential2D {
    let phis: Vec<&Potential2D> = (0..data.n()).map(|i| data.potential(i, j)).collect();
    mean_circledcirc(f, &phis)
}

/// `(1/n) sum_i f (*) phi_i` without span checks.
pub fn mean_circledcirc(f: &StepParams, phis: &[&Potential2D]) -> Potential2D {
    let g = phis[0].grid;
    let n = phis.len() as f64;
    let mut values = vec![0.0; g.len()];
    let mut grad = vec![[0.0; 2]; g.len()];
    for phi in phis {
        let sp = scaled_potential(f, phi);
        for k in 0..g.len() {
            values[k] += sp.values[k] / n;
            grad[k][0] += sp.grad[k][0] / n;
            grad[k][1] += sp.grad[k][1] / n;
        }
    }
    Potential2D { grid: g, values, grad }
}

/// Predicts a response density for new predictors by transporting `nu_bar` through the model map.
pub fn predict_2d(model: &Model2D, predictors: &[Density2D], ot: &OtConfig) -> Result<Density2D> {
    if predictors.len() != model.step_params.len() {
        return Err(Error::Dimension(format!(
            "model has {} predictors, got {}",
            model.step_params.len(),
            predictors.len()
        )));
    }
    let phis = predictors
        .iter()
        .zip(&model.mu_bars)
        .map(|(mu, bar)| Ok(ot_solve_2d(bar, mu, ot)?.potential))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&Potential2D> = phis.iter().collect();
    pushforward_2d(&model.nu_bar, &model.map_for(&refs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Fit2DConfig {
    /// Fixed step; `None` uses `0.9 / L` for the linearized loss.
    pub step_size: Option<f64>,
    pub max_iters: usize,
    /// Stop when the relative loss change falls below this.
    pub tol: f64,
    /// Or when no coefficient moves by more than this in one step.
    pub param_tol: f64,
    /// Or when the best loss has not improved for this many iterations (inner solver noise floor).
    pub patience: usize,
    pub sign_configs: Option<Vec<SignConfig>>,
    pub knots: usize,
    pub knot_pad: f64,
    pub power_iters: usize,
    pub ot: OtConfig,
}

impl Default for Fit2DConfig {
    fn default() -> Self {
        Self {
            step_size: None,
            max_iters: 60,
            tol: 1e-6,
            param_tol: 1e-4,
            patience: 8,
            sign_configs: None,
            knots: 20,
            knot_pad: 0.01,
            power_iters: 20,
            ot: OtConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Fit2DResult {
    pub model: Model2D,
    pub loss_trace: Vec<f64>,
    pub chosen_delta: SignConfig,
    pub per_delta_losses: BTreeMap<String, f64>,
    pub step_size: f64,
    pub iterations: usize,
}

impl Fit2DResult {
    pub fn final_loss(&self) -> f64 {
        self.loss_trace.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Precomputed per-record knot buckets and weighted gradients for one sign configuration.
struct Problem2D<'a> {
    data: &'a Dataset2D,
    steps: Vec<StepParams>,
    weights: Vec<f64>,
    /// `idx[j][i][m]`: first knot `l` with `z_l >= s phi_i^j(x_m)`.
    idx: Vec<Vec<Vec<u32>>>,
}

impl<'a> Problem2D<'a> {
    fn new(data: &'a Dataset2D, delta: &[Sign], cfg: &Fit2DConfig) -> Result<Self> {
        let steps = delta
            .iter()
            .enumerate()
            .map(|(j, s)| StepParams::zeros(default_knots_2d(data, j, cfg.knots, cfg.knot_pad), *s))
            .collect::<Result<Vec<_>>>()?;
        Self::from_steps(data, steps)
    }

    fn from_steps(data: &'a Dataset2D, steps: Vec<StepParams>) -> Result<Self> {
        if steps.len() != data.p() {
            return Err(Error::Dimension(format!("{} scaling functions for {} predictors", steps.len(), data.p())));
        }
        let idx = steps
            .iter()
            .enumerate()
            .map(|(j, f)| {
                let s = f.sign.factor();
                (0..data.n())
                    .map(|i| {
                        data.potential(i, j)
                            .values
                            .iter()
                            .map(|&v| f.knots.partition_point(|&z| z < s * v) as u32)
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Ok(Self { data, steps, weights: data.nu_bar.masses(), idx })
    }

    fn with_theta(&self, theta: &[Vec<f64>]) -> Vec<StepParams> {
        self.steps
            .iter()
            .zip(theta)
            .map(|(f, t)| StepParams { theta: t.clone(), ..f.clone() })
            .collect()
    }

    /// `grad Phi_i` at every cell, centered across records.
    fn displacement_grads(&self, theta: &[Vec<f64>]) -> Vec<Vec<[f64; 2]>> {
        let g = self.data.grid;
        let n = self.data.n();
        let steps = self.with_theta(theta);
        let mut rows: Vec<Vec<[f64; 2]>> = vec![vec![[0.0; 2]; g.len()]; n];
        for (j, f) in steps.iter().enumerate() {
            for (i, row) in rows.iter_mut().enumerate() {
                let sp = scaled_potential(f, self.data.potential(i, j));
                for (acc, d) in row.iter_mut().zip(&sp.grad) {
                    acc[0] += d[0];
                    acc[1] += d[1];
                }
            }
        }
        center_rows(&mut rows);
        rows
    }

    /// `-(2/n) sum_i int <delta_i, grad phi_i^j> 1{s phi <= z_l} d nu_bar`, for every `(j, l)`.
    fn binned_gradient(&self, delta: &[Vec<[f64; 2]>]) -> Vec<Vec<f64>> {
        let n = self.data.n();
        let scale = -2.0 / n as f64;
        (0..self.steps.len())
            .map(|j| {
                let k = self.steps[j].k();
                let buckets = par::map_indexed(n, |i| {
                    let mut b = vec![0.0; k + 1];
                    let gphi = &self.data.potential(i, j).grad;
                    for (m, w) in self.weights.iter().enumerate() {
                        if *w == 0.0 {
                            continue;
                        }
                        let ip = delta[i][m][0] * gphi[m][0] + delta[i][m][1] * gphi[m][1];
                        b[self.idx[j][i][m] as usize] += w * ip;
                    }
                    b
                });
                let total = par::pairwise_sum_rows(&buckets);
                let mut acc = 0.0;
                (0..k)
                    .map(|l| {
                        acc += total[l];
                        scale * acc
                    })
                    .collect()
            })
            .collect()
    }

    /// Loss and gradient at `theta`, solving one transport problem per record.
    fn evaluate(&self, theta: &[Vec<f64>], ot: &OtConfig) -> Result<(f64, Vec<Vec<f64>>)> {
        let g = self.data.grid;
        let grads = self.displacement_grads(theta);
        let nu_bar = &self.data.nu_bar;
        let solved = par::map_indexed(self.data.n(), |i| -> Result<(f64, Vec<[f64; 2]>)> {
            let map = displaced(&g, &grads[i]);
            let pred = pushforward_2d(nu_bar, &map)?;
            let sol = ot_solve_2d(&pred, &self.data.responses[i], ot)?;
            if !sol.converged {
                log::warn!("inner transport for record {i} stopped before converging");
            }
            // residual potential gradient evaluated at T(x)
            let gx: Vec<f64> = sol.potential.grad.iter().map(|d| d[0]).collect();
            let gy: Vec<f64> = sol.potential.grad.iter().map(|d| d[1]).collect();
            let res = (0..g.len()).map(|m| [g.interp(&gx, map.tx[m], map.ty[m]), g.interp(&gy, map.tx[m], map.ty[m])]).collect();
            Ok((2.0 * sol.dual, res))
        });
        let mut losses = Vec::with_capacity(solved.len());
        let mut delta = Vec::with_capacity(solved.len());
        for s in solved {
            let (l, d) = s?;
            losses.push(l);
            delta.push(d);
        }
        center_rows(&mut delta);
        let loss = par::pairwise_sum(&losses) / losses.len() as f64;
        Ok((loss, self.binned_gradient(&delta)))
    }

    /// Gauss-Newton product: the gradient of the loss linearized around the current maps.
    fn gn_product(&self, v: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let d = self.displacement_grads(v);
        // d enters the linearized residual with a minus sign
        let neg: Vec<Vec<[f64; 2]>> = d.iter().map(|r| r.iter().map(|x| [-x[0], -x[1]]).collect()).collect();
        self.binned_gradient(&neg)
    }

    fn lipschitz(&self, iters: usize) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let mut v: Vec<Vec<f64>> = self.steps.iter().map(|f| (0..f.k()).map(|_| rng.gen_range(0.5..1.5)).collect()).collect();
        let mut lam = 0.0;
        for _ in 0..iters.max(1) {
            let norm = v.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            v.iter_mut().flatten().for_each(|x| *x /= norm);
            let hv = self.gn_product(&v);
            lam = hv.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
            v = hv;
        }
        lam
    }
}

fn center_rows(rows: &mut [Vec<[f64; 2]>]) {
    let n = rows.len() as f64;
    if rows.is_empty() {
        return;
    }
    let len = rows[0].len();
    for m in 0..len {
        let (sx, sy) = rows.iter().fold((0.0, 0.0), |(a, b), r| (a + r[m][0], b + r[m][1]));
        for r in rows.iter_mut() {
            r[m][0] -= sx / n;
            r[m][1] -= sy / n;
        }
    }
}

fn project_sign(theta: &mut [Vec<f64>], delta: &[Sign]) {
    for (row, s) in theta.iter_mut().zip(delta) {
        for t in row.iter_mut() {
            *t = match s {
                Sign::Plus => t.max(0.0),
                Sign::Minus => t.min(0.0),
            };
        }
    }
}

struct Run2D {
    theta: Vec<Vec<f64>>,
    trace: Vec<f64>,
    best: f64,
    step: f64,
    iterations: usize,
}

fn run_delta(prob: &Problem2D, delta: &[Sign], cfg: &Fit2DConfig) -> Result<Run2D> {
    let step = match cfg.step_size {
        Some(s) => s,
        None => {
            let l = prob.lipschitz(cfg.power_iters);
            if l > 0.0 {
                0.9 / l
            } else {
                1.0
            }
        }
    };
    let mut theta: Vec<Vec<f64>> = prob.steps.iter().map(|f| vec![0.0; f.k()]).collect();
    let (mut loss, mut grad) = prob.evaluate(&theta, &cfg.ot)?;
    let mut trace = vec![loss];
    let (mut best, mut best_theta) = (loss, theta.clone());
    let mut iterations = 0;
    let mut stale = 0;
    for it in 0..cfg.max_iters {
        iterations = it + 1;
        let mut next: Vec<Vec<f64>> =
            theta.iter().zip(&grad).map(|(t, g)| t.iter().zip(g).map(|(a, b)| a - step * b).collect()).collect();
        project_sign(&mut next, delta);
        let (l, g) = prob.evaluate(&next, &cfg.ot)?;
        trace.push(l);
        let change = (loss - l).abs() / loss.abs().max(f64::MIN_POSITIVE);
        let moved = theta.iter().flatten().zip(next.iter().flatten()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        theta = next;
        loss = l;
        grad = g;
        if loss < best {
            best = loss;
            best_theta = theta.clone();
            stale = 0;
        } else {
            stale += 1;
        }
        if change < cfg.tol || moved < cfg.param_tol || stale >= cfg.patience {
            break;
        }
    }
    Ok(Run2D { theta: best_theta, trace, best, step, iterations })
}

/// `k` knots symmetric about zero, covering `+-` the observed range of `phi_i^j` padded by `pad`.
pub fn default_knots_2d(data: &Dataset2D, j: usize, k: usize, pad: f64) -> Vec<f64> {
    let (lo, hi) = data.potential_range(j);
    let m = lo.abs().max(hi.abs()).max(1e-9) * (1.0 + 2.0 * pad);
    linspace(-m, m, k)
}

/// Loss `(1/n) sum_i W2^2(nu_i, (T_i)_# nu_bar)` and its gradient in every `theta_{j,l}`,
/// with knots and signs taken from `steps`.
pub fn loss_and_gradient_2d(data: &Dataset2D, steps: &[StepParams], ot: &OtConfig) -> Result<(f64, Vec<Vec<f64>>)> {
    let prob = Problem2D::from_steps(data, steps.to_vec())?;
    let theta: Vec<Vec<f64>> = steps.iter().map(|f| f.theta.clone()).collect();
    prob.evaluate(&theta, ot)
}

/// Projected gradient descent on the scaling functions, one run per sign configuration.
pub fn fit_2d(data: &Dataset2D, cfg: &Fit2DConfig) -> Result<Fit2DResult> {
    let p = data.p();
    if p == 0 {
        return Err(Error::Dimension("fit_2d needs at least one predictor".into()));
    }
    if cfg.knots == 0 || cfg.max_iters == 0 {
        return Err(Error::InvalidParameter("knots and max_iters must be positive".into()));
    }
    let deltas = match &cfg.sign_configs {
        Some(d) => {
            if d.is_empty() || d.iter().any(|c| c.len() != p) {
                return Err(Error::Dimension(format!("sign configurations must have length {p}")));
            }
            d.clone()
        }
        None => {
            if p > MAX_SIGN_PREDICTORS {
                return Err(Error::TooManySigns(p));
            }
            all_sign_configs(p)
        }
    };
    let mut per_delta = BTreeMap::new();
    let mut best: Option<(f64, SignConfig, Problem2D, Run2D)> = None;
    for delta in deltas {
        let prob = Problem2D::new(data, &delta, cfg)?;
        let run = run_delta(&prob, &delta, cfg)?;
        per_delta.insert(format_signs(&delta), run.best);
        let better = match &best {
            None => true,
            Some((b, d, _, _)) => run.best < *b - 1e-12 || (run.best <= *b + 1e-12 && format_signs(&delta) < format_signs(d)),
        };
        if better {
            best = Some((run.best, delta, prob, run));
        }
    }
    let (_, chosen, prob, run) = best.expect("at least one sign configuration");
    let steps = prob.with_theta(&run.theta);
    let intercepts = steps.iter().enumerate().map(|(j, f)| mean_scaled(f, data, j)).collect();
    let model = Model2D {
        grid: data.grid,
        step_params: steps,
        intercepts,
        nu_bar: data.nu_bar.clone(),
        mu_bars: data.mu_bars.clone(),
    };
    Ok(Fit2DResult {
        model,
        loss_trace: run.trace,
        chosen_delta: chosen,
        per_delta_losses: per_delta,
        step_size: run.step,
        iterations: run.iterations,
    })
}
