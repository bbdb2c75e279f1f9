//! Seeded generators for the illustrative constructions and the synthetic experiment.

use std::f64::consts::{E, PI};
use std::sync::Arc;

use log::{debug, info};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{fit, FitConfig};
use crate::grid::{Density1D, Grid1D};
use crate::model::{linspace, Dataset, ModelSpec, Sign, Smoothing, StepParams};
use crate::ot1d::{barycenter, ot_map, potential_from_map, pushforward, Potential1D, TransportMap1D};
use crate::ot2d::{self, BarycenterConfig, Dataset2D, Density2D, Grid2D, Model2D, OtConfig, Potential2D};
use crate::par;

/// Substream ids; each field draws from its own stream so adding one never shifts another.
mod stream {
    pub const MEANS: u64 = 1;
    pub const SIGMAS: u64 = 2;
    pub const XI: u64 = 3;
    pub const COVARIATE: u64 = 4;
}

fn substream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig1D {
    pub n: usize,
    pub seed: u64,
    pub grid: Grid1D,
    pub noise_amp: f64,
    pub distortion_modes: usize,
}

impl SynthConfig1D {
    pub fn new(n: usize, seed: u64) -> Self {
        Self { n, seed, grid: Grid1D::unit(201), noise_amp: 1.0 / (55.0 * PI), distortion_modes: 10 }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidParameter("n must be at least 1".into()));
        }
        if !(self.noise_amp >= 0.0) {
            return Err(Error::InvalidParameter(format!("noise amplitude must be >= 0, got {}", self.noise_amp)));
        }
        if self.grid.lo != 0.0 || self.grid.hi != 1.0 {
            return Err(Error::InvalidGrid("the generator lives on [0, 1]".into()));
        }
        Ok(())
    }
}

pub type Curve = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Closed-form truth: one `(sign, f')` per distributional predictor and one `psi'` per covariate.
#[derive(Clone)]
pub struct TruthParams {
    pub f_derivs: Vec<(Sign, Curve)>,
    pub psi_derivs: Vec<Curve>,
}

impl std::fmt::Debug for TruthParams {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TruthParams")
            .field("signs", &self.f_derivs.iter().map(|c| c.0).collect::<Vec<_>>())
            .field("q", &self.psi_derivs.len())
            .finish()
    }
}

impl TruthParams {
    /// `f1' = 0.5 sqrt(1 - t)`, `f2' = 0.5 log(1.2 - t)`, `psi(x) = 0.3 (x / 2pi - sin(2 pi x) / 4pi^2)`.
    pub fn standard() -> Self {
        Self {
            f_derivs: vec![
                (Sign::Plus, Arc::new(|t: f64| 0.5 * (1.0 - t).sqrt())),
                (Sign::Plus, Arc::new(|t: f64| 0.5 * (1.2 - t).ln())),
            ],
            psi_derivs: vec![Arc::new(psi_check_deriv)],
        }
    }

    /// Same arity as [`TruthParams::standard`] with every function zero.
    pub fn zero() -> Self {
        let z: Curve = Arc::new(|_| 0.0);
        Self { f_derivs: vec![(Sign::Plus, z.clone()), (Sign::Plus, z.clone())], psi_derivs: vec![z] }
    }

    pub fn p(&self) -> usize {
        self.f_derivs.len()
    }

    pub fn q(&self) -> usize {
        self.psi_derivs.len()
    }
}

/// `psi'` of the covariate truth, `0.3 (1 - cos 2 pi x) / (2 pi)`.
pub fn psi_check_deriv(x: f64) -> f64 {
    0.3 * (1.0 - (2.0 * PI * x).cos()) / (2.0 * PI)
}

/// Sine-perturbed distortion `x + sum_k xi_k sin(k pi x)` with coefficients drawn from `rng`.
///
/// Draws that are not monotone at grid resolution are discarded; the second value
/// counts the discarded draws.
pub fn gen_distortion(rng: &mut impl Rng, grid: Grid1D, amp: f64, modes: usize) -> (TransportMap1D, usize) {
    let mut rejected = 0;
    loop {
        let xi: Vec<f64> = (0..modes)
            .map(|_| if amp > 0.0 { rng.gen_range(-amp..=amp) } else { 0.0 })
            .collect();
        let t = distortion_from_coeffs(grid, &xi);
        if t.is_monotone() {
            return (t, rejected);
        }
        rejected += 1;
    }
}

/// `x + sum_k xi[k-1] sin(k pi x)` at the nodes of `grid`.
pub fn distortion_from_coeffs(grid: Grid1D, xi: &[f64]) -> TransportMap1D {
    TransportMap1D::from_fn(grid, |x| {
        x + xi.iter().enumerate().map(|(k, c)| c * ((k + 1) as f64 * PI * x).sin()).sum::<f64>()
    })
}

/// A generated dataset together with its ground truth.
#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub data: Dataset,
    pub truth: TruthParams,
    /// Uncentered covariates `X_i`.
    pub covariates: Vec<f64>,
    pub rejected_draws: usize,
}

/// Predictor family `j`: (mean range, sd range).
fn family(j: usize) -> ((f64, f64), (f64, f64)) {
    if j.is_multiple_of(2) {
        ((0.2, 0.5), (0.2, 0.3))
    } else {
        ((0.5, 0.8), (0.3, 0.4))
    }
}

/// Responses `(T_eps)_# (T_{sum_j phi~_i^j + Z_i psi})_# nu_bar` with uniform `nu_bar` on `[0, 1]`.
///
/// The returned dataset caches the generator's potentials, which are centered against
/// `nu_bar`; its reference `nu_bar_n` is the empirical barycenter of the responses.
pub fn gen_mixed_dataset(cfg: &SynthConfig1D, truth: &TruthParams) -> Result<SynthDataset> {
    cfg.validate()?;
    let (n, p, q) = (cfg.n, truth.p(), truth.q());
    let grid = cfg.grid;
    let nu = Density1D::uniform(grid);

    let mut means = substream(cfg.seed, stream::MEANS);
    let mut sigmas = substream(cfg.seed, stream::SIGMAS);
    let mut xi = substream(cfg.seed, stream::XI);
    let mut cov = substream(cfg.seed, stream::COVARIATE);
    let mut shapes = Vec::with_capacity(n);
    let mut distortions = Vec::with_capacity(n);
    let mut covariates = Vec::with_capacity(n);
    let mut rejected_draws = 0;
    for _ in 0..n {
        let row: Vec<(f64, f64)> = (0..p)
            .map(|j| {
                let ((m0, m1), (s0, s1)) = family(j);
                (means.gen_range(m0..=m1), sigmas.gen_range(s0..=s1))
            })
            .collect();
        shapes.push(row);
        let (t, r) = gen_distortion(&mut xi, grid, cfg.noise_amp, cfg.distortion_modes);
        rejected_draws += r;
        distortions.push(t);
        covariates.push((0..q).map(|_| cov.gen_range(0.0..=1.0)).collect::<Vec<f64>>());
    }
    if rejected_draws > 0 {
        info!("redrew {rejected_draws} non-monotone distortions");
    }

    let predictors: Vec<Vec<Density1D>> = par::map_slice(&shapes, |row| {
        row.iter().map(|(m, s)| Density1D::truncated_normal(grid, *m, *s)).collect::<Result<Vec<_>>>()
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let mu_bars: Vec<Density1D> = (0..p)
        .map(|j| {
            let col: Vec<Density1D> = predictors.iter().map(|r| r[j].clone()).collect();
            barycenter(&col, None)
        })
        .collect::<Result<_>>()?;
    let potentials: Vec<Vec<Potential1D>> = par::map_slice(&predictors, |row| {
        row.iter()
            .zip(&mu_bars)
            .map(|(mu, bar)| {
                let t = ot_map(bar, mu)?;
                let deriv = grid.nodes().iter().zip(&t.values).map(|(x, y)| x - y).collect();
                Potential1D::from_deriv(deriv, &nu)
            })
            .collect::<Result<Vec<_>>>()
    })
    .into_iter()
    .collect::<Result<_>>()?;

    let nodes = grid.nodes();
    let mut disp = vec![vec![0.0; grid.n]; n];
    for (j, (sign, fp)) in truth.f_derivs.iter().enumerate() {
        let s = sign.factor();
        let g: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let ph = &potentials[i][j];
                ph.values.iter().zip(&ph.deriv).map(|(v, d)| fp(s * v) * d).collect()
            })
            .collect();
        let mean = par::pairwise_sum_rows(&g);
        for i in 0..n {
            for m in 0..grid.n {
                disp[i][m] += g[i][m] - mean[m] / n as f64;
            }
        }
    }
    for (k, psi) in truth.psi_derivs.iter().enumerate() {
        for i in 0..n {
            let z = covariates[i][k] - 0.5;
            for m in 0..grid.n {
                disp[i][m] += z * psi(nodes[m]);
            }
        }
    }
    let responses: Vec<Density1D> = par::map_indexed(n, |i| {
        let values = (0..grid.n).map(|m| distortions[i].eval(nodes[m] - disp[i][m])).collect();
        let t = TransportMap1D::new(grid, values)?;
        t.check_monotone()?;
        pushforward(&nu, &t)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let nu_bar = barycenter(&responses, None)?;
    let scalars: Vec<Vec<f64>> = covariates.clone();
    let data = Dataset::from_parts(responses, predictors, scalars, nu_bar, mu_bars, potentials)?;
    debug!("generated n = {n}, p = {p}, q = {q}, seed = {}", cfg.seed);
    Ok(SynthDataset { data, truth: truth.clone(), covariates: covariates.into_iter().flatten().collect(), rejected_draws })
}

/// Squared-error integral of `f_hat' - f'` per predictor and `psi_hat' - psi'` per covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryErrors {
    pub f: Vec<f64>,
    pub psi: Vec<f64>,
}

const ERROR_SAMPLES: usize = 1001;

/// Weight of the L2 error integrals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorWeight {
    /// Lebesgue measure on the observed range of `phi_i^j` (and on the grid for `psi`).
    Uniform,
    /// The fitting weight: `(1/n) sum_i (phi_i^j)_# nu_bar_n` (and `nu_bar_n` for `psi`).
    Pushforward,
    /// Pushforward weight tilted by `|phi_i'|^2` and renormalized, the weight under which the
    /// loss actually observes `f'`; `psi` is weighted as under `Pushforward`.
    Displacement,
}

/// L2 errors of a fitted model against the truth.
pub fn recovery_errors(model: &ModelSpec, data: &Dataset, truth: &TruthParams, weight: ErrorWeight) -> RecoveryErrors {
    let grid = *data.grid();
    let nodes = grid.nodes();
    let qw = data.nu_bar().quadrature_weights();
    let n = data.n();
    let f = (0..model.p)
        .map(|j| {
            let sp = &model.step_params[j];
            let (sign, fp) = &truth.f_derivs[j];
            let sf = sp.sign.factor();
            let st = sign.factor();
            let sqerr = |v: f64| {
                let d = sp.fprime(sf * v) - fp(st * v);
                d * d
            };
            match weight {
                ErrorWeight::Uniform => {
                    let (lo, hi) = data.potential_range(j);
                    if hi <= lo {
                        return 0.0;
                    }
                    let sq: Vec<f64> = linspace(lo, hi, ERROR_SAMPLES).into_iter().map(sqerr).collect();
                    Grid1D { lo, hi, n: ERROR_SAMPLES }.integrate(&sq).sqrt()
                }
                ErrorWeight::Pushforward => {
                    let per: Vec<f64> = (0..n)
                        .map(|i| {
                            let sq: Vec<f64> =
                                data.potential(i, j).values.iter().zip(&qw).map(|(v, w)| w * sqerr(*v)).collect();
                            par::pairwise_sum(&sq)
                        })
                        .collect();
                    (par::pairwise_sum(&per) / n as f64).sqrt()
                }
                ErrorWeight::Displacement => {
                    let (num, den): (Vec<f64>, Vec<f64>) = (0..n)
                        .map(|i| {
                            let ph = data.potential(i, j);
                            let mut a = 0.0;
                            let mut b = 0.0;
                            for ((v, d), w) in ph.values.iter().zip(&ph.deriv).zip(&qw) {
                                let wd = w * d * d;
                                a += wd * sqerr(*v);
                                b += wd;
                            }
                            (a, b)
                        })
                        .unzip();
                    let den = par::pairwise_sum(&den);
                    if den > 0.0 {
                        (par::pairwise_sum(&num) / den).sqrt()
                    } else {
                        0.0
                    }
                }
            }
        })
        .collect();
    let psi = (0..model.q)
        .map(|k| {
            let ps = &model.psi_params[k];
            let sq: Vec<f64> = nodes
                .iter()
                .map(|&x| {
                    let d = ps.deriv(x) - truth.psi_derivs[k](x);
                    d * d
                })
                .collect();
            match weight {
                ErrorWeight::Uniform => grid.integrate(&sq).sqrt(),
                ErrorWeight::Pushforward | ErrorWeight::Displacement => sq.iter().zip(&qw).map(|(a, w)| a * w).sum::<f64>().sqrt(),
            }
        })
        .collect();
    RecoveryErrors { f, psi }
}

/// One row of the convergence table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub target: String,
    pub n: usize,
    pub log_n: f64,
    pub log_l2_error: f64,
}

/// For every `n`, fits the standard truth over all `seeds` and reports `log` of the seed-averaged L2 errors.
pub fn run_convergence(ns: &[usize], seeds: &[u64], grid: Grid1D, fit_cfg: &FitConfig) -> Result<Vec<ConvergenceRow>> {
    if ns.is_empty() || seeds.is_empty() {
        return Err(Error::EmptyInput);
    }
    let truth = TruthParams::standard();
    let targets: Vec<String> = (1..=truth.p()).map(|j| format!("f{j}")).chain((1..=truth.q()).map(|k| format!("psi{k}"))).collect();
    let mut rows = Vec::new();
    for &n in ns {
        let mut sums = vec![0.0; targets.len()];
        for &seed in seeds {
            let cfg = SynthConfig1D { grid, ..SynthConfig1D::new(n, seed) };
            let s = gen_mixed_dataset(&cfg, &truth)?;
            let res = fit(&s.data, fit_cfg)?;
            let e = recovery_errors(&res.model, &s.data, &truth, ErrorWeight::Pushforward);
            for (acc, v) in sums.iter_mut().zip(e.f.iter().chain(&e.psi)) {
                *acc += v;
            }
            info!("n = {n}, seed = {seed}: errors {:?}, delta {:?}", e, res.chosen_delta);
        }
        for (t, s) in targets.iter().zip(&sums) {
            rows.push(ConvergenceRow {
                target: t.clone(),
                n,
                log_n: (n as f64).ln(),
                log_l2_error: (s / seeds.len() as f64).ln(),
            });
        }
    }
    Ok(rows)
}

/// Analytic maps `T1, T2, T3` of the one-dimensional illustration.
pub fn demo_map(k: usize, x: f64) -> f64 {
    let t1 = (1.0 - (-x).exp()) / (1.0 - 1.0 / E);
    let t2 = (x.exp() - 1.0) / (E - 1.0);
    match k {
        0 => t1,
        1 => t2,
        _ => 3.0 * x - t1 - t2,
    }
}

/// The one-dimensional illustration: barycenter, three predictors, their potentials.
#[derive(Debug, Clone)]
pub struct Demo1D {
    pub grid: Grid1D,
    pub mu_bar: Density1D,
    pub maps: Vec<TransportMap1D>,
    pub predictors: Vec<Density1D>,
    pub potentials: Vec<Potential1D>,
}

impl Demo1D {
    pub fn setting(&self, s: usize, sign: Sign) -> Result<StepParams> {
        demo_setting(s, sign)
    }

    /// Dataset with the analytic potentials; responses are the predictors themselves.
    pub fn dataset(&self) -> Result<Dataset> {
        Dataset::from_parts(
            self.predictors.clone(),
            self.predictors.iter().map(|d| vec![d.clone()]).collect(),
            vec![vec![]; 3],
            self.mu_bar.clone(),
            vec![self.mu_bar.clone()],
            self.potentials.iter().map(|p| vec![p.clone()]).collect(),
        )
    }

    /// Responses `nu_i = (T_{phi_i})_# mu_bar` with `phi_i = f (*) phi_i - mean_r f (*) phi_r`.
    pub fn responses(&self, f: &StepParams) -> Result<(Vec<Density1D>, Vec<Potential1D>)> {
        let comps = self
            .potentials
            .iter()
            .map(|p| crate::model::circledcirc(f, p))
            .collect::<Result<Vec<_>>>()?;
        let k = comps.len() as f64;
        let mut out = Vec::new();
        let mut pots = Vec::new();
        for c in &comps {
            let values = (0..self.grid.n).map(|m| c.values[m] - comps.iter().map(|o| o.values[m]).sum::<f64>() / k).collect();
            let deriv = (0..self.grid.n).map(|m| c.deriv[m] - comps.iter().map(|o| o.deriv[m]).sum::<f64>() / k).collect();
            let phi = Potential1D { grid: self.grid, values, deriv };
            out.push(pushforward(&self.mu_bar, &phi.map())?);
            pots.push(phi);
        }
        Ok((out, pots))
    }
}

/// The three parameter settings: slopes `2e-4 l` and `5e-4 l` on 100 knots over `[-0.05, 0.05]`,
/// with smoothing `theta0 = 0` (settings 1, 3) or `100` (setting 2).
pub fn demo_setting(s: usize, sign: Sign) -> Result<StepParams> {
    let (scale, theta0) = match s {
        1 => (2e-4, 0.0),
        2 => (2e-4, 100.0),
        3 => (5e-4, 0.0),
        _ => return Err(Error::InvalidParameter(format!("unknown setting {s}"))),
    };
    let theta = (1..=100).map(|l| sign.factor() * scale * l as f64).collect();
    StepParams::new(linspace(-0.05, 0.05, 100), theta, sign, Smoothing::Sigmoid { theta0 })
}

/// Truncated `N(0.5, 0.1^2)` barycenter with the three analytic maps pushed through it.
pub fn gen_demo_1d(grid: Grid1D) -> Result<Demo1D> {
    let mu_bar = Density1D::truncated_normal(grid, 0.5, 0.1)?;
    let maps: Vec<TransportMap1D> = (0..3).map(|k| TransportMap1D::from_fn(grid, |x| demo_map(k, x))).collect();
    let predictors = maps.iter().map(|t| pushforward(&mu_bar, t)).collect::<Result<Vec<_>>>()?;
    let potentials = maps.iter().map(|t| potential_from_map(t, &mu_bar)).collect::<Result<Vec<_>>>()?;
    Ok(Demo1D { grid, mu_bar, maps, predictors, potentials })
}

/// Two uniform disks of diameter 0.1 centered at `(0.2, 0.2)` and `(0.8, 0.8)`, and
/// the disk of the same size at `(0.5, 0.5)` that is their barycenter.
#[derive(Debug, Clone)]
pub struct Demo2D {
    pub grid: Grid2D,
    pub disks: Vec<Density2D>,
    pub barycenter: Density2D,
}

pub const DISK_RADIUS: f64 = 0.05;
pub const DISK_CENTERS: [(f64, f64); 2] = [(0.2, 0.2), (0.8, 0.8)];
const DISK_SUPERSAMPLE: usize = 8;

pub fn gen_demo_2d(grid: Grid2D) -> Result<Demo2D> {
    if grid.nx < 32 || grid.ny < 32 {
        return Err(Error::InvalidGrid(format!("the disk demo needs at least 32x32 cells, got {}x{}", grid.nx, grid.ny)));
    }
    let disks = DISK_CENTERS
        .iter()
        .map(|c| Density2D::disk(grid, *c, DISK_RADIUS, DISK_SUPERSAMPLE))
        .collect::<Result<Vec<_>>>()?;
    let barycenter = Density2D::disk(grid, (0.5, 0.5), DISK_RADIUS, DISK_SUPERSAMPLE)?;
    Ok(Demo2D { grid, disks, barycenter })
}

impl Demo2D {
    /// Potentials from the barycenter to each disk.
    pub fn potentials(&self, ot: &OtConfig) -> Result<Vec<Potential2D>> {
        self.disks.iter().map(|d| Ok(ot2d::ot_solve_2d(&self.barycenter, d, ot)?.potential)).collect()
    }

    /// Noiseless single-predictor dataset: the disks are the predictors and the responses
    /// are the barycenter pushed through `x - grad(f (*) phi_i - mean_r f (*) phi_r)`.
    pub fn dataset(&self, f: &StepParams, ot: &OtConfig) -> Result<Dataset2D> {
        let phis = self.potentials(ot)?;
        for phi in &phis {
            ot2d::circledcirc_2d_on(f, phi, &self.barycenter)?;
        }
        let refs: Vec<&Potential2D> = phis.iter().collect();
        let model = Model2D {
            grid: self.grid,
            step_params: vec![f.clone()],
            intercepts: vec![ot2d::mean_circledcirc(f, &refs)],
            nu_bar: self.barycenter.clone(),
            mu_bars: vec![self.barycenter.clone()],
        };
        let responses = phis
            .iter()
            .map(|phi| ot2d::pushforward_2d(&self.barycenter, &model.map_for(&[phi])))
            .collect::<Result<Vec<_>>>()?;
        Dataset2D::from_parts(
            responses,
            self.disks.iter().map(|d| vec![d.clone()]).collect(),
            self.barycenter.clone(),
            vec![self.barycenter.clone()],
            phis.into_iter().map(|p| vec![p]).collect(),
        )
    }

    /// Barycenter of the two disks by the fixed-point iteration.
    pub fn computed_barycenter(&self, cfg: &BarycenterConfig) -> Result<Density2D> {
        ot2d::barycenter_2d(&self.disks, cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{empirical_loss, estimate_constants, LossMode, PsiParams};

    #[test]
    fn distortion_examples() {
        let g = Grid1D::unit(201);
        let id = distortion_from_coeffs(g, &[0.0; 10]);
        assert_eq!(id.values, g.nodes());
        let a = 1.0 / (55.0 * PI);
        let t = distortion_from_coeffs(g, &[a]);
        assert!(t.is_monotone());
        assert!((t.eval(0.5) - 0.5 - a).abs() < 1e-12);
    }

    #[test]
    fn distortion_mean_is_identity() {
        let g = Grid1D::unit(11);
        let mut rng = substream(7, stream::XI);
        let draws = 10_000;
        let a = 1.0 / (55.0 * PI);
        let vals: Vec<f64> = (0..draws).map(|_| gen_distortion(&mut rng, g, a, 10).0.values[5]).collect();
        let mean = vals.iter().sum::<f64>() / draws as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
        assert!((mean - 0.5).abs() < 3.0 * (var / draws as f64).sqrt(), "{mean}");
    }

    #[test]
    fn zero_truth_no_noise_gives_barycenter() {
        let cfg = SynthConfig1D { noise_amp: 0.0, ..SynthConfig1D::new(5, 1) };
        let s = gen_mixed_dataset(&cfg, &TruthParams::zero()).unwrap();
        let u = Density1D::uniform(cfg.grid);
        for r in s.data.responses() {
            assert!(crate::ot1d::w2(r, &u) < 1e-9);
        }
    }

    #[test]
    fn generator_is_deterministic() {
        let cfg = SynthConfig1D::new(6, 42);
        let a = gen_mixed_dataset(&cfg, &TruthParams::standard()).unwrap();
        let b = gen_mixed_dataset(&cfg, &TruthParams::standard()).unwrap();
        for (x, y) in a.data.responses().iter().zip(b.data.responses()) {
            assert_eq!(x.values(), y.values());
        }
        assert_eq!(a.covariates, b.covariates);
        for r in a.data.responses() {
            assert!((r.mass() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn loss_at_truth_is_discretization_floor() {
        let cfg = SynthConfig1D { noise_amp: 0.0, ..SynthConfig1D::new(30, 3) };
        let truth = TruthParams::standard();
        let s = gen_mixed_dataset(&cfg, &truth).unwrap();
        let d = &s.data;
        let mut steps = Vec::new();
        for j in 0..2 {
            let knots = crate::fit::default_knots(d, j, 100, 0.01);
            // f' at the knots, differenced into step heights
            let fp: Vec<f64> = knots.iter().map(|z| truth.f_derivs[j].1(*z)).collect();
            let theta = (0..100).map(|l| if l + 1 < 100 { fp[l] - fp[l + 1] } else { fp[l] }).collect();
            steps.push(StepParams::new(knots, theta, Sign::Plus, Smoothing::Step).unwrap());
        }
        let knots = d.grid().nodes();
        let h: Vec<f64> = knots.iter().map(|x| x - psi_check_deriv(*x)).collect();
        let vartheta = (0..h.len()).map(|l| if l == 0 { h[0] } else { h[l] - h[l - 1] }).collect();
        let psi = PsiParams::new(knots, vartheta).unwrap();
        let m = ModelSpec::from_params(d, steps, vec![psi]).unwrap();
        let loss = empirical_loss(&m, d, LossMode::Quadratic).unwrap();
        assert!(loss <= 1e-5, "{loss}");
    }

    #[test]
    fn demo_fixture() {
        let g = Grid1D::unit(2001);
        let d = gen_demo_1d(g).unwrap();
        assert_eq!(d.maps[0].values[0], 0.0);
        assert!((d.maps[0].values[2000] - 1.0).abs() < 1e-12);
        for m in 0..g.n {
            let s: f64 = (0..3).map(|k| d.maps[k].values[m]).sum();
            assert!((s - 3.0 * g.node(m)).abs() < 1e-12);
        }
        let c = estimate_constants(&d.dataset().unwrap());
        assert!((c.eta[0] - 9.998e-3).abs() / 9.998e-3 < 0.02);
    }
}
