mod common;

use kantoreg::fit::{default_knots, fit, grad_theta, grad_vartheta, FitConfig};
use kantoreg::grid::{cdf, Density1D, Grid1D};
use kantoreg::model::{
    empirical_loss, fitted_maps, Dataset, LossMode, ModelSpec, PsiParams, Sign, Smoothing, StepParams,
};
use kantoreg::ot1d::{barycenter, pushforward};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn gaussian_predictors(seed: u64, n: usize, p: usize, g: Grid1D) -> Vec<Vec<Density1D>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            (0..p)
                .map(|_| Density1D::truncated_normal(g, rng.gen_range(0.38..0.62), rng.gen_range(0.07..0.11)).unwrap())
                .collect()
        })
        .collect()
}

fn wide(nodes: usize) -> Grid1D {
    Grid1D::new(-0.5, 1.5, nodes).unwrap()
}

/// `f_j' = slope_j` (a single step at the last knot) on the default knots.
fn linear_truth(data: &Dataset, slopes: &[(Sign, f64)], k: usize) -> Vec<StepParams> {
    slopes
        .iter()
        .enumerate()
        .map(|(j, &(sign, slope))| {
            let mut theta = vec![0.0; k];
            theta[k - 1] = slope;
            StepParams::new(default_knots(data, j, k, 0.01), theta, sign, Smoothing::Step).unwrap()
        })
        .collect()
}

/// Noiseless responses `(T_Phi_i)_# nu_bar` from a known model over `N(0.5, 0.1^2)`.
/// Use a domain wide enough that no density is cut off at its ends: an expanding
/// (minus-sign) truth would otherwise push the truncated tails out of the grid.
fn noiseless(predictors: Vec<Vec<Density1D>>, slopes: &[(Sign, f64)], k: usize) -> (Dataset, Vec<StepParams>) {
    let g = *predictors[0][0].grid();
    let n = predictors.len();
    let nu_bar = Density1D::truncated_normal(g, 0.5, 0.1).unwrap();
    let mu_bars = (0..slopes.len())
        .map(|j| {
            let fam: Vec<Density1D> = predictors.iter().map(|r| r[j].clone()).collect();
            barycenter(&fam, None).unwrap()
        })
        .collect();
    let scalars = vec![vec![]; n];
    let scaffold =
        Dataset::with_references(vec![nu_bar.clone(); n], predictors.clone(), scalars.clone(), nu_bar.clone(), mu_bars)
            .unwrap();
    let truth = linear_truth(&scaffold, slopes, k);
    let model = ModelSpec::from_params(&scaffold, truth.clone(), vec![]).unwrap();
    let responses = fitted_maps(&model, &scaffold)
        .unwrap()
        .iter()
        .map(|t| {
            assert!(t.first_violation_on(&nu_bar).is_none(), "generator map decreases at node {:?}", t.first_violation_on(&nu_bar));
            pushforward(&nu_bar, t).unwrap()
        })
        .collect();
    (Dataset::new(responses, predictors, scalars).unwrap(), truth)
}

/// `f'` at every argument `+-phi_i^j(x)` with `x` in the 1%-99% quantile band of `nu_bar`;
/// further out the loss puts almost no weight on `f'`.
fn fprime_on_data(data: &Dataset, f: &StepParams, j: usize) -> Vec<f64> {
    let s = f.sign.factor();
    let c = cdf(data.nu_bar());
    let (lo, hi) = (c.quantile_unchecked(0.01), c.quantile_unchecked(0.99));
    let support: Vec<bool> = data.grid().nodes().iter().map(|x| *x >= lo && *x <= hi).collect();
    (0..data.n())
        .flat_map(|i| {
            let phi = data.potential(i, j);
            phi.values
                .iter()
                .zip(&support)
                .filter(|(_, on)| **on)
                .map(move |(v, _)| f.fprime(s * v))
                .collect::<Vec<_>>()
        })
        .collect()
}

#[test]
fn gradient_vanishes_at_the_generating_parameters() {
    let preds = gaussian_predictors(3, 12, 1, wide(601));
    let (data, truth) = noiseless(preds, &[(Sign::Plus, 0.5)], 30);
    // refit the knots on the final dataset so the truth is expressed in its own basis
    let steps = linear_truth(&data, &[(truth[0].sign, 0.5)], 30);
    let m = ModelSpec::from_params(&data, steps, vec![]).unwrap();
    let g = grad_theta(&m, &data, 0).unwrap();
    let sup = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    assert!(sup <= 5e-3, "gradient sup-norm {sup}");
    assert!(empirical_loss(&m, &data, LossMode::Quadratic).unwrap() < 1e-5);
}

#[test]
fn gradient_at_zero_matches_the_defining_integral() {
    let g = Grid1D::unit(301);
    let preds = gaussian_predictors(11, 5, 1, g);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let responses: Vec<Density1D> =
        (0..5).map(|_| Density1D::truncated_normal(g, rng.gen_range(0.4..0.6), rng.gen_range(0.06..0.1)).unwrap()).collect();
    let data = Dataset::new(responses, preds, vec![vec![]; 5]).unwrap();
    let f = StepParams::zeros(default_knots(&data, 0, 15, 0.01), Sign::Plus).unwrap();
    let m = ModelSpec::from_params(&data, vec![f.clone()], vec![]).unwrap();
    let analytic = grad_theta(&m, &data, 0).unwrap();

    // -(2/n) sum_i integral (x - T_{nu_bar -> nu_i}) phi_i' 1{phi_i <= z_l} d nu_bar
    let w = data.nu_bar().quadrature_weights();
    let nodes = g.nodes();
    let n = data.n() as f64;
    for (l, z) in f.knots.iter().enumerate() {
        let mut acc = 0.0;
        for i in 0..data.n() {
            let t = &data.response_map(i).values;
            let phi = data.potential(i, 0);
            for m in 0..nodes.len() {
                if phi.values[m] <= *z {
                    acc += w[m] * (nodes[m] - t[m]) * phi.deriv[m];
                }
            }
        }
        let oracle = -2.0 * acc / n;
        let scale = analytic.iter().fold(1e-8f64, |a, v| a.max(v.abs()));
        assert!((analytic[l] - oracle).abs() <= 1e-2 * scale, "knot {l}: {} vs {}", analytic[l], oracle);
    }
}

#[test]
fn covariate_gradient_vanishes_when_every_z_hat_is_zero() {
    let g = Grid1D::unit(201);
    let preds = gaussian_predictors(5, 4, 1, g);
    let responses: Vec<Density1D> = preds.iter().map(|r| r[0].clone()).collect();
    let data = Dataset::new(responses, preds, vec![vec![0.7]; 4]).unwrap();
    let f = StepParams::zeros(default_knots(&data, 0, 5, 0.01), Sign::Plus).unwrap();
    let psi = PsiParams::new(g.nodes(), vec![0.001; g.n]).unwrap();
    let m = ModelSpec::from_params(&data, vec![f], vec![psi]).unwrap();
    assert!(grad_vartheta(&m, &data, 0).unwrap().iter().all(|v| *v == 0.0));
}

#[test]
fn zero_signal_gives_zero_parameters() {
    let g = Grid1D::unit(201);
    let preds = gaussian_predictors(8, 6, 2, g);
    let nu = Density1D::truncated_normal(g, 0.5, 0.1).unwrap();
    let data = Dataset::new(vec![nu.clone(); 6], preds, vec![vec![1.5]; 6]).unwrap();
    let cfg = FitConfig { knots: 12, psi_knots: Some(12), max_iters: 200, ..Default::default() };
    let res = fit(&data, &cfg).unwrap();
    assert!(res.model.step_params.iter().all(|f| f.theta.iter().all(|t| *t == 0.0)));
    assert!(res.model.psi_params.iter().all(|p| p.vartheta.iter().all(|t| *t == 0.0)));
    assert_eq!(res.final_loss(), 0.0);
}

#[test]
fn minus_sign_truth_is_recovered() {
    let preds = gaussian_predictors(21, 30, 1, wide(601));
    let (data, _) = noiseless(preds, &[(Sign::Minus, -0.5)], 40);
    let cfg = FitConfig { knots: 40, ..Default::default() };
    let res = fit(&data, &cfg).unwrap();
    assert_eq!(res.chosen_delta, vec![Sign::Minus]);
    let f = &res.model.step_params[0];
    let worst = fprime_on_data(&data, f, 0).iter().fold(0.0f64, |a, v| a.max((v + 0.5).abs()));
    assert!(worst <= 5e-2, "max |f' + 0.5| = {worst}");
}

#[test]
fn sign_selection_matches_the_generator() {
    let preds = gaussian_predictors(34, 50, 2, wide(301));
    let (data, _) = noiseless(preds, &[(Sign::Plus, 0.6), (Sign::Minus, -0.4)], 20);
    let cfg = FitConfig { knots: 20, max_iters: 3000, ..Default::default() };
    let res = fit(&data, &cfg).unwrap();
    assert_eq!(res.chosen_delta, vec![Sign::Plus, Sign::Minus], "{:?}", res.per_delta_losses);
    let best = res.per_delta_losses.values().cloned().fold(f64::INFINITY, f64::min);
    assert_eq!(res.per_delta_losses["+-"], best);
}

#[test]
fn loss_trace_never_increases() {
    let data = common::random_dataset(77, 8, 2, 1, 201);
    for accelerate in [false, true] {
        let cfg = FitConfig { knots: 15, psi_knots: Some(15), max_iters: 400, accelerate, ..Default::default() };
        let res = fit(&data, &cfg).unwrap();
        for w in res.loss_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "accelerate={accelerate}: {} -> {}", w[0], w[1]);
        }
        let best = res.per_delta_losses.values().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(res.per_delta_losses[&kantoreg::model::format_signs(&res.chosen_delta)], best);
    }
}
