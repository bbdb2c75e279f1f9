//! Projected gradient descent on the quadratic objective, one run per sign configuration.

use std::collections::BTreeMap;

use log::{debug, info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::eval::Problem;
use crate::model::{
    all_sign_configs, format_signs, linspace, split_params, Dataset, ModelSpec, PsiParams, Sign, SignConfig, Smoothing,
    StepParams,
};

/// Largest number of distributional predictors for which all sign configurations are tried.
pub const MAX_SIGN_PREDICTORS: usize = 16;

/// Consecutive loss increases tolerated before the step size is declared too large.
const DIVERGENCE_PATIENCE: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// Fixed step size; `None` uses `0.9 / L` with `L` from power iteration.
    pub step_size: Option<f64>,
    pub max_iters: usize,
    /// Stop when the relative loss decrease of one iteration falls below this.
    pub tol: f64,
    /// Explicit sign configurations to try; `None` tries all `2^p`.
    pub sign_configs: Option<Vec<SignConfig>>,
    /// Optional per-covariate cap on `sum_l vartheta_{k,l}`.
    pub project_rho_box: Option<Vec<f64>>,
    /// Knots per distributional predictor.
    pub knots: usize,
    /// Relative padding of the knot span.
    pub knot_pad: f64,
    /// Knots per covariate; `None` places one knot at every grid node.
    pub psi_knots: Option<usize>,
    pub power_iters: usize,
    /// Nesterov momentum with a restart whenever the loss would increase.
    pub accelerate: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            step_size: None,
            max_iters: 5000,
            tol: 1e-10,
            sign_configs: None,
            project_rho_box: None,
            knots: 100,
            knot_pad: 0.01,
            psi_knots: None,
            power_iters: 20,
            accelerate: true,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(s) = self.step_size {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidParameter(format!("step size must be positive, got {s}")));
            }
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be at least 1".into()));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::InvalidParameter(format!("tol must be nonnegative, got {}", self.tol)));
        }
        if self.knots < 2 || self.psi_knots.is_some_and(|k| k < 2) {
            return Err(Error::InvalidParameter("need at least two knots".into()));
        }
        if !(self.knot_pad >= 0.0) {
            return Err(Error::InvalidParameter("knot padding must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub model: ModelSpec,
    /// Quadratic loss before the first step and after every iteration.
    pub loss_trace: Vec<f64>,
    pub chosen_delta: SignConfig,
    /// Final loss per sign configuration, keyed like `"+-"`.
    pub per_delta_losses: BTreeMap<String, f64>,
    /// Sup-norm of the projected-gradient mapping at the returned parameters.
    pub grad_norm_final: f64,
    pub step_size: f64,
    pub iterations: usize,
}

impl FitResult {
    pub fn final_loss(&self) -> f64 {
        *self.loss_trace.last().unwrap()
    }
}

/// Coefficients `theta` (p rows) and `vartheta` (q rows).
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub theta: Vec<Vec<f64>>,
    pub vartheta: Vec<Vec<f64>>,
}

impl Params {
    pub fn zeros(theta_k: &[usize], vartheta_k: &[usize]) -> Self {
        Self {
            theta: theta_k.iter().map(|k| vec![0.0; *k]).collect(),
            vartheta: vartheta_k.iter().map(|k| vec![0.0; *k]).collect(),
        }
    }

    fn iter(&self) -> impl Iterator<Item = &f64> {
        self.theta.iter().flatten().chain(self.vartheta.iter().flatten())
    }
}

/// Euclidean projection onto `{x >= 0, sum x <= cap}`.
fn project_capped(v: &mut [f64], cap: f64) {
    let clamped: f64 = v.iter().map(|x| x.max(0.0)).sum();
    if clamped <= cap {
        v.iter_mut().for_each(|x| *x = x.max(0.0));
        return;
    }
    // projection onto the simplex {x >= 0, sum x = cap}
    let mut u: Vec<f64> = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut tau = 0.0;
    for (i, ui) in u.iter().enumerate() {
        acc += ui;
        let t = (acc - cap) / (i + 1) as f64;
        if ui - t > 0.0 {
            tau = t;
        }
    }
    v.iter_mut().for_each(|x| *x = (*x - tau).max(0.0));
}

/// Clamp `theta_j` to the orthant of `delta_j` and `vartheta` to `>= 0`, then apply the optional cap.
pub fn project(params: &Params, delta: &[Sign], cap: Option<&[f64]>) -> Params {
    let theta = params
        .theta
        .iter()
        .zip(delta)
        .map(|(row, s)| {
            row.iter()
                .map(|t| match s {
                    Sign::Plus => t.max(0.0),
                    Sign::Minus => t.min(0.0),
                })
                .collect()
        })
        .collect();
    let vartheta = params
        .vartheta
        .iter()
        .enumerate()
        .map(|(k, row)| {
            let mut r = row.clone();
            match cap.and_then(|c| c.get(k)) {
                Some(&c) => project_capped(&mut r, c),
                None => r.iter_mut().for_each(|x| *x = x.max(0.0)),
            }
            r
        })
        .collect();
    Params { theta, vartheta }
}

/// `dJ/dtheta_j` at the model's parameters on `data`.
pub fn grad_theta(model: &ModelSpec, data: &Dataset, j: usize) -> Result<Vec<f64>> {
    let prob = Problem::new(data, &model.step_params, &model.psi_params)?;
    let (theta, vartheta) = split_params(model);
    Ok(prob.grad_theta(&prob.residuals(&theta, &vartheta), j))
}

/// `dJ/dvartheta_k` at the model's parameters on `data`.
pub fn grad_vartheta(model: &ModelSpec, data: &Dataset, k: usize) -> Result<Vec<f64>> {
    let prob = Problem::new(data, &model.step_params, &model.psi_params)?;
    let (theta, vartheta) = split_params(model);
    Ok(prob.grad_vartheta(&prob.residuals(&theta, &vartheta), k))
}

/// `K` knots covering the range of `+-phi_i^j`, padded by `pad` of the width on each side.
pub fn default_knots(data: &Dataset, j: usize, k: usize, pad: f64) -> Vec<f64> {
    let (lo, hi) = data.potential_range(j);
    let m = lo.abs().max(hi.abs()).max(1e-9);
    let half = m * (1.0 + 2.0 * pad);
    linspace(-half, half, k)
}

/// Covariate knots: `k` equally spaced over the grid, or one per node.
pub fn default_psi_knots(data: &Dataset, k: Option<usize>) -> Vec<f64> {
    let g = data.grid();
    match k {
        Some(k) => linspace(g.lo, g.hi, k),
        None => g.nodes(),
    }
}

struct Run {
    trace: Vec<f64>,
    grad_norm: f64,
    step: f64,
    iterations: usize,
}

/// Above this many coordinates the Hessian is not materialized.
const GRAM_MAX_DIM: usize = 2500;

/// Block lengths of the flattened coefficient vector: theta rows, then vartheta rows.
#[derive(Debug, Clone)]
struct Layout {
    theta: Vec<usize>,
    vartheta: Vec<usize>,
}

impl Layout {
    fn dim(&self) -> usize {
        self.theta.iter().chain(&self.vartheta).sum()
    }

    fn unflatten(&self, x: &[f64]) -> Params {
        let mut off = 0;
        let mut take = |k: usize| {
            let row = x[off..off + k].to_vec();
            off += k;
            row
        };
        let theta = self.theta.iter().map(|k| take(*k)).collect();
        let vartheta = self.vartheta.iter().map(|k| take(*k)).collect();
        Params { theta, vartheta }
    }

    fn flatten(p: &Params) -> Vec<f64> {
        p.iter().copied().collect()
    }

    /// Mask of coordinates held at zero.
    fn frozen_mask(&self, frozen: &[bool]) -> Vec<bool> {
        let mut m = Vec::with_capacity(self.dim());
        for (k, f) in self.theta.iter().zip(frozen) {
            m.extend(std::iter::repeat_n(*f, *k));
        }
        for k in &self.vartheta {
            m.extend(std::iter::repeat_n(false, *k));
        }
        m
    }
}

/// The quadratic objective, evaluated either through the residual engine or a stored Hessian.
enum Objective<'a> {
    MatrixFree { prob: Problem<'a>, layout: Layout, mask: Vec<bool> },
    Gram { j0: f64, g0: Vec<f64>, h: Vec<f64>, dim: usize },
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl<'a> Objective<'a> {
    fn matrix_free(prob: Problem<'a>, layout: Layout, frozen: &[bool]) -> Self {
        let mask = layout.frozen_mask(frozen);
        Objective::MatrixFree { prob, layout, mask }
    }

    /// Materializes the Hessian column by column from gradient differences.
    fn into_gram(self) -> Self {
        let Objective::MatrixFree { prob, layout, mask } = &self else {
            return self;
        };
        let dim = layout.dim();
        let zero = vec![0.0; dim];
        let (j0, g0) = self.eval(&zero);
        let cols: Vec<Vec<f64>> = (0..dim)
            .map(|c| {
                if mask[c] {
                    return vec![0.0; dim];
                }
                let mut e = zero.clone();
                e[c] = 1.0;
                let p = layout.unflatten(&e);
                let res = prob.residuals(&p.theta, &p.vartheta);
                let (gt, gv) = prob.gradient(&res);
                let g = Layout::flatten(&Params { theta: gt, vartheta: gv });
                g.iter().zip(&g0).zip(mask).map(|((a, b), m)| if *m { 0.0 } else { a - b }).collect()
            })
            .collect();
        let mut h = vec![0.0; dim * dim];
        for r in 0..dim {
            for c in 0..dim {
                // symmetrize away rounding
                h[r * dim + c] = 0.5 * (cols[c][r] + cols[r][c]);
            }
        }
        Objective::Gram { j0, g0, h, dim }
    }

    fn eval(&self, x: &[f64]) -> (f64, Vec<f64>) {
        match self {
            Objective::MatrixFree { prob, layout, mask } => {
                let p = layout.unflatten(x);
                let res = prob.residuals(&p.theta, &p.vartheta);
                let (gt, gv) = prob.gradient(&res);
                let mut g = Layout::flatten(&Params { theta: gt, vartheta: gv });
                for (gi, m) in g.iter_mut().zip(mask) {
                    if *m {
                        *gi = 0.0;
                    }
                }
                (prob.loss(&res), g)
            }
            Objective::Gram { j0, g0, h, dim } => {
                let hx: Vec<f64> = h.chunks_exact(*dim).map(|row| dot(row, x)).collect();
                let loss = j0 + dot(g0, x) + 0.5 * dot(x, &hx);
                let g = g0.iter().zip(&hx).map(|(a, b)| a + b).collect();
                (loss.max(0.0), g)
            }
        }
    }

    /// Largest eigenvalue of the Hessian by power iteration.
    fn lipschitz(&self, dim: usize, mask: &[bool], iters: usize) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let zero = vec![0.0; dim];
        let (_, g0) = self.eval(&zero);
        let mut v: Vec<f64> = mask.iter().map(|m| if *m { 0.0 } else { rng.gen_range(0.5..1.5) }).collect();
        let mut lam = 0.0;
        for _ in 0..iters.max(1) {
            let nv = dot(&v, &v).sqrt();
            if nv == 0.0 {
                return 0.0;
            }
            let unit: Vec<f64> = v.iter().map(|x| x / nv).collect();
            let (_, g) = self.eval(&unit);
            let hv: Vec<f64> = g.iter().zip(&g0).map(|(a, b)| a - b).collect();
            lam = dot(&hv, &hv).sqrt();
            v = hv;
        }
        lam
    }
}

fn run_delta(data: &Dataset, delta: &[Sign], cfg: &FitConfig) -> Result<(Run, Vec<StepParams>, Vec<PsiParams>)> {
    let steps: Vec<StepParams> = delta
        .iter()
        .enumerate()
        .map(|(j, s)| StepParams::zeros(default_knots(data, j, cfg.knots, cfg.knot_pad), *s))
        .collect::<Result<_>>()?;
    let psis: Vec<PsiParams> = (0..data.q())
        .map(|_| PsiParams::zeros(default_psi_knots(data, cfg.psi_knots)))
        .collect::<Result<_>>()?;
    let prob = Problem::new(data, &steps, &psis)?;
    let frozen: Vec<bool> = (0..data.p()).map(|j| data.is_degenerate(j)).collect();
    let layout = Layout { theta: steps.iter().map(|f| f.k()).collect(), vartheta: psis.iter().map(|p| p.k()).collect() };
    let dim = layout.dim();
    let mask = layout.frozen_mask(&frozen);
    let mut obj = Objective::matrix_free(prob, layout.clone(), &frozen);
    if dim <= GRAM_MAX_DIM {
        obj = obj.into_gram();
    }
    let step = match cfg.step_size {
        Some(s) => s,
        None => {
            let l = obj.lipschitz(dim, &mask, cfg.power_iters);
            if l > 0.0 {
                0.9 / l
            } else {
                1.0
            }
        }
    };
    let cap = cfg.project_rho_box.as_deref();
    let proj = |x: &[f64]| Layout::flatten(&project(&layout.unflatten(x), delta, cap));
    let mut x = vec![0.0; dim];
    let (mut loss, mut g) = obj.eval(&x);
    let mut trace = vec![loss];
    let mut increases = 0;
    let mut iterations = 0;
    // extrapolated point, its gradient, and the momentum counter
    let mut y = x.clone();
    let mut gy = g.clone();
    let mut t_k = 1.0_f64;
    for it in 0..cfg.max_iters {
        let trial: Vec<f64> = y.iter().zip(&gy).map(|(a, b)| a - step * b).collect();
        let mut next = proj(&trial);
        let (mut next_loss, mut g_next) = obj.eval(&next);
        if cfg.accelerate && t_k > 1.0 && next_loss > loss {
            // restart from a plain gradient step at x
            t_k = 1.0;
            let trial: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - step * b).collect();
            next = proj(&trial);
            (next_loss, g_next) = obj.eval(&next);
        }
        iterations = it + 1;
        trace.push(next_loss);
        if next_loss > loss + 1e-12 * loss.abs().max(1.0) {
            increases += 1;
            if increases >= DIVERGENCE_PATIENCE {
                return Err(Error::StepTooLarge(increases));
            }
        } else {
            increases = 0;
        }
        let decrease = (loss - next_loss) / loss.abs().max(f64::MIN_POSITIVE);
        if cfg.accelerate {
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t_k * t_k).sqrt());
            let beta = (t_k - 1.0) / t_next;
            y = next.iter().zip(&x).map(|(a, b)| a + beta * (a - b)).collect();
            gy = if beta == 0.0 { g_next.clone() } else { obj.eval(&y).1 };
            t_k = t_next;
        } else {
            y = next.clone();
            gy = g_next.clone();
        }
        x = next;
        g = g_next;
        loss = next_loss;
        if loss == 0.0 || (decrease >= 0.0 && decrease < cfg.tol) {
            break;
        }
    }
    let trial: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - step * b).collect();
    let mapped = proj(&trial);
    let grad_norm = mapped.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / step;
    let x = layout.unflatten(&x);
    debug!("delta {}: loss {loss:.6e} after {iterations} iterations", format_signs(delta));
    let mut steps = steps;
    for (f, th) in steps.iter_mut().zip(&x.theta) {
        f.theta = th.clone();
        f.smoothing = Smoothing::Step;
    }
    let mut psis = psis;
    for (p, vt) in psis.iter_mut().zip(&x.vartheta) {
        p.vartheta = vt.clone();
    }
    Ok((Run { trace, grad_norm, step, iterations }, steps, psis))
}

/// Fits every sign configuration and keeps the one with the smallest final loss.
pub fn fit(data: &Dataset, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    let (n, p, q) = (data.n(), data.p(), data.q());
    if n < 2 {
        return Err(Error::InvalidParameter(format!("need at least two records, got {n}")));
    }
    if p + q == 0 {
        return Err(Error::InvalidParameter("no predictors".into()));
    }
    if let Some(c) = &config.project_rho_box {
        if c.len() != q || c.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Dimension(format!("box cap needs {q} nonnegative entries")));
        }
    }
    let configs = match &config.sign_configs {
        Some(list) => {
            if list.is_empty() || list.iter().any(|d| d.len() != p) {
                return Err(Error::Dimension(format!("sign configurations must have length {p}")));
            }
            list.clone()
        }
        None => {
            if p > MAX_SIGN_PREDICTORS {
                return Err(Error::TooManySigns(p));
            }
            all_sign_configs(p)
        }
    };
    for j in 0..p {
        if data.is_degenerate(j) {
            warn!("predictor {j} is degenerate; its coefficients stay at zero");
        }
    }
    let mut runs = Vec::with_capacity(configs.len());
    for delta in &configs {
        let (run, steps, psis) = run_delta(data, delta, config)?;
        info!(
            "delta {}: final loss {:.6e} ({} iterations)",
            format_signs(delta),
            run.trace.last().unwrap(),
            run.iterations
        );
        runs.push((delta.clone(), run, steps, psis));
    }
    let best_loss = runs.iter().map(|r| *r.1.trace.last().unwrap()).fold(f64::INFINITY, f64::min);
    let slack = 1e-12 * best_loss.abs().max(1.0);
    let per_delta_losses = runs.iter().map(|r| (format_signs(&r.0), *r.1.trace.last().unwrap())).collect();
    let winner = runs
        .into_iter()
        .filter(|r| *r.1.trace.last().unwrap() <= best_loss + slack)
        .min_by(|a, b| a.0.cmp(&b.0))
        .expect("at least one configuration");
    let (delta, run, steps, psis) = winner;
    let model = ModelSpec::from_params(data, steps, psis)?;
    Ok(FitResult {
        model,
        loss_trace: run.trace,
        chosen_delta: delta,
        per_delta_losses,
        grad_norm_final: run.grad_norm,
        step_size: run.step,
        iterations: run.iterations,
    })
}
