#![allow(dead_code)]

use kantoreg::fit::{default_knots, default_psi_knots};
use kantoreg::grid::{Density1D, Grid1D};
use kantoreg::model::{Dataset, ModelSpec, PsiParams, Sign, Smoothing, StepParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A random small mixed dataset on `[0, 1]`: truncated normals with random
/// location and spread, `p` predictors and `q` scalar covariates.
pub fn random_dataset(seed: u64, n: usize, p: usize, q: usize, nodes: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = Grid1D::unit(nodes);
    let blob = |rng: &mut ChaCha8Rng| {
        let m = rng.gen_range(0.3..0.7);
        let s = rng.gen_range(0.06..0.15);
        Density1D::truncated_normal(g, m, s).unwrap()
    };
    let responses = (0..n).map(|_| blob(&mut rng)).collect();
    let predictors = (0..n).map(|_| (0..p).map(|_| blob(&mut rng)).collect()).collect();
    let scalars = (0..n).map(|_| (0..q).map(|_| rng.gen_range(-0.4..0.4)).collect()).collect();
    Dataset::new(responses, predictors, scalars).unwrap()
}

/// Strictly interior random parameters (so finite differences stay inside the sign orthant).
pub fn random_model(data: &Dataset, seed: u64, k: usize, psi_k: usize, scale: f64) -> ModelSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let steps = (0..data.p())
        .map(|j| {
            let sign = if rng.gen_bool(0.5) { Sign::Plus } else { Sign::Minus };
            let theta = (0..k).map(|_| sign.factor() * scale * rng.gen_range(0.01..1.0)).collect();
            let smoothing = if rng.gen_bool(0.5) {
                Smoothing::Step
            } else {
                Smoothing::Sigmoid { theta0: rng.gen_range(0.0..200.0) }
            };
            StepParams::new(default_knots(data, j, k, 0.01), theta, sign, smoothing).unwrap()
        })
        .collect();
    let psis = (0..data.q())
        .map(|_| {
            let v = (0..psi_k).map(|_| scale * rng.gen_range(0.01..1.0)).collect();
            PsiParams::new(default_psi_knots(data, Some(psi_k)), v).unwrap()
        })
        .collect();
    ModelSpec::from_params(data, steps, psis).unwrap()
}

/// A random model whose derivative bounds are finite: logistic steps, or one step at
/// the last knot (a linear `f`). Parameters are halved until the inequality holds.
pub fn feasible_model(data: &Dataset, seed: u64, linear: bool) -> Option<ModelSpec> {
    let mut m = random_model(data, seed, 8, 6, 2.0);
    for f in m.step_params.iter_mut() {
        if linear {
            let last = f.theta[f.k() - 1];
            f.theta.iter_mut().for_each(|t| *t = 0.0);
            *f.theta.last_mut().unwrap() = last;
            f.smoothing = Smoothing::Step;
        } else if f.smoothing == Smoothing::Step {
            f.smoothing = Smoothing::Sigmoid { theta0: 50.0 };
        }
    }
    for _ in 0..60 {
        let rebuilt = ModelSpec::from_params(data, m.step_params.clone(), m.psi_params.clone()).unwrap();
        if rebuilt.feasibility().unwrap().0 {
            return Some(rebuilt);
        }
        m.step_params.iter_mut().for_each(|f| f.theta.iter_mut().for_each(|t| *t *= 0.5));
        m.psi_params.iter_mut().for_each(|p| p.vartheta.iter_mut().for_each(|t| *t *= 0.5));
    }
    None
}
