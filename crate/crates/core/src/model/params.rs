//! Finite-dimensional parameterizations of `f'` (steps) and `psi'`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid1D;
use crate::ot1d::Potential1D;

/// Monotonicity class of a functional parameter.
///
/// `Plus`: `f` non-decreasing and concave, `theta >= 0`.
/// `Minus`: `f` non-increasing and convex, `theta <= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl Sign {
    #[inline]
    pub fn factor(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn flip(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sign::Plus => "+",
            Sign::Minus => "-",
        })
    }
}

impl std::str::FromStr for Sign {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "+" | "plus" => Ok(Sign::Plus),
            "-" | "minus" => Ok(Sign::Minus),
            other => Err(Error::Parse(format!("bad sign {other:?}"))),
        }
    }
}

/// One sign per distributional predictor.
pub type SignConfig = Vec<Sign>;

/// Formats a sign configuration as e.g. `"+-+"`.
pub fn format_signs(delta: &[Sign]) -> String {
    delta.iter().map(|s| s.to_string()).collect()
}

/// All `2^p` configurations, lexicographic with `+` before `-`.
pub fn all_sign_configs(p: usize) -> Vec<SignConfig> {
    (0..1usize << p)
        .map(|mask| {
            (0..p)
                .map(|j| if mask >> (p - 1 - j) & 1 == 0 { Sign::Plus } else { Sign::Minus })
                .collect()
        })
        .collect()
}

/// Basis shape of `f'`: exact indicator steps or the logistic smoothing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Smoothing {
    /// `1{t <= z_l}`.
    Step,
    /// `1 / (1 + exp(theta0 (t - z_l)))`; `theta0 = 0` gives constant weights of 1/2.
    Sigmoid { theta0: f64 },
}

#[inline]
fn logistic_weight(theta0: f64, u: f64) -> f64 {
    // 1 / (1 + exp(theta0 u)) without overflow
    let a = theta0 * u;
    if a >= 0.0 {
        let e = (-a).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + a.exp())
    }
}

#[inline]
fn softplus(a: f64) -> f64 {
    if a > 0.0 {
        a + (-a).exp().ln_1p()
    } else {
        a.exp().ln_1p()
    }
}

/// Step (or logistic) parameterization `f'(t) = sum_l theta_l b_l(t)` on knots `z_1 < ... < z_K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepParams {
    pub knots: Vec<f64>,
    pub theta: Vec<f64>,
    pub sign: Sign,
    pub smoothing: Smoothing,
}

impl StepParams {
    pub fn new(knots: Vec<f64>, theta: Vec<f64>, sign: Sign, smoothing: Smoothing) -> Result<Self> {
        let p = Self { knots, theta, sign, smoothing };
        p.validate()?;
        Ok(p)
    }

    /// Zero parameters on the given knots.
    pub fn zeros(knots: Vec<f64>, sign: Sign) -> Result<Self> {
        let k = knots.len();
        Self::new(knots, vec![0.0; k], sign, Smoothing::Step)
    }

    pub fn validate(&self) -> Result<()> {
        if self.knots.is_empty() {
            return Err(Error::InvalidParameter("no knots".into()));
        }
        if self.knots.len() != self.theta.len() {
            return Err(Error::Dimension(format!(
                "{} knots but {} theta values",
                self.knots.len(),
                self.theta.len()
            )));
        }
        if self.knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("knots must be strictly increasing".into()));
        }
        let bad = match self.sign {
            Sign::Plus => self.theta.iter().any(|t| *t < 0.0),
            Sign::Minus => self.theta.iter().any(|t| *t > 0.0),
        };
        if bad {
            return Err(Error::InvalidParameter(format!("theta violates sign {}", self.sign)));
        }
        if let Smoothing::Sigmoid { theta0 } = self.smoothing {
            if !(theta0 >= 0.0 && theta0.is_finite()) {
                return Err(Error::InvalidParameter(format!("theta0 must be >= 0, got {theta0}")));
            }
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.knots.len()
    }

    pub fn span(&self) -> (f64, f64) {
        (self.knots[0], *self.knots.last().unwrap())
    }

    /// Weight of `theta_l` in `f'(t)`.
    #[inline]
    pub fn basis(&self, l: usize, t: f64) -> f64 {
        match self.smoothing {
            Smoothing::Step => {
                if t <= self.knots[l] {
                    1.0
                } else {
                    0.0
                }
            }
            Smoothing::Sigmoid { theta0 } => logistic_weight(theta0, t - self.knots[l]),
        }
    }

    pub fn fprime(&self, t: f64) -> f64 {
        match self.smoothing {
            Smoothing::Step => {
                // knots are sorted: sum theta over knots >= t
                let first = self.knots.partition_point(|&z| z < t);
                self.theta[first..].iter().sum()
            }
            Smoothing::Sigmoid { .. } => (0..self.k()).map(|l| self.theta[l] * self.basis(l, t)).sum(),
        }
    }

    /// `f''(t)`; zero for exact steps away from the knots.
    pub fn fsecond(&self, t: f64) -> f64 {
        match self.smoothing {
            Smoothing::Step => 0.0,
            Smoothing::Sigmoid { theta0 } => (0..self.k())
                .map(|l| {
                    let s = logistic_weight(theta0, t - self.knots[l]);
                    -theta0 * self.theta[l] * s * (1.0 - s)
                })
                .sum(),
        }
    }

    /// `f(t) = integral of f' from z_1 to t`.
    pub fn f(&self, t: f64) -> f64 {
        let a = self.knots[0];
        match self.smoothing {
            Smoothing::Step => self
                .knots
                .iter()
                .zip(&self.theta)
                .map(|(&z, &th)| th * (t.min(z) - a).max(0.0))
                .sum(),
            Smoothing::Sigmoid { theta0: 0.0 } => 0.5 * self.theta.iter().sum::<f64>() * (t - a),
            Smoothing::Sigmoid { theta0 } => {
                // antiderivative of the logistic weight: -(1/theta0) softplus(-theta0 (s - z))
                self.knots
                    .iter()
                    .zip(&self.theta)
                    .map(|(&z, &th)| {
                        let g = |s: f64| -softplus(-theta0 * (s - z)) / theta0;
                        th * (g(t) - g(a))
                    })
                    .sum()
            }
        }
    }
}

/// `(kappa1, kappa2) = (sup |f'|, sup |f''|)` over `[a, b]`.
///
/// For exact steps `f''` is a sum of point masses, reported as `f64::INFINITY`
/// whenever a nonzero step falls inside `[a, b)`.
pub fn step_derivative_stats(f: &StepParams, range: (f64, f64)) -> (f64, f64) {
    let (a, b) = range;
    match f.smoothing {
        Smoothing::Step => {
            let mut k1 = f.fprime(a).abs();
            for &z in &f.knots {
                if z >= a && z <= b {
                    k1 = k1.max(f.fprime(z).abs());
                }
            }
            let jump = f.knots.iter().zip(&f.theta).any(|(&z, &th)| th != 0.0 && z >= a && z < b);
            (k1, if jump { f64::INFINITY } else { 0.0 })
        }
        Smoothing::Sigmoid { .. } => {
            const SAMPLES: usize = 20_001;
            let mut k1 = 0.0f64;
            let mut k2 = 0.0f64;
            let mut visit = |t: f64| {
                k1 = k1.max(f.fprime(t).abs());
                k2 = k2.max(f.fsecond(t).abs());
            };
            for i in 0..SAMPLES {
                visit(a + (b - a) * i as f64 / (SAMPLES - 1) as f64);
            }
            for &z in &f.knots {
                if z >= a && z <= b {
                    visit(z);
                }
            }
            (k1, k2)
        }
    }
}

/// `psi'(x) = x - sum_l vartheta_l 1{x >= z_l}` with `vartheta >= 0`,
/// i.e. `psi = x^2/2 - h` for a convex `h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsiParams {
    pub knots: Vec<f64>,
    pub vartheta: Vec<f64>,
}

impl PsiParams {
    pub fn new(knots: Vec<f64>, vartheta: Vec<f64>) -> Result<Self> {
        if knots.is_empty() || knots.len() != vartheta.len() {
            return Err(Error::Dimension(format!(
                "{} knots but {} vartheta values",
                knots.len(),
                vartheta.len()
            )));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("knots must be strictly increasing".into()));
        }
        if vartheta.iter().any(|v| *v < 0.0) {
            return Err(Error::InvalidParameter("vartheta must be nonnegative".into()));
        }
        Ok(Self { knots, vartheta })
    }

    pub fn zeros(knots: Vec<f64>) -> Result<Self> {
        let k = knots.len();
        Self::new(knots, vec![0.0; k])
    }

    pub fn k(&self) -> usize {
        self.knots.len()
    }

    /// `h'(x) = sum of vartheta_l over knots z_l <= x`.
    pub fn hprime(&self, x: f64) -> f64 {
        let upto = self.knots.partition_point(|&z| z <= x);
        self.vartheta[..upto].iter().sum()
    }

    pub fn deriv(&self, x: f64) -> f64 {
        x - self.hprime(x)
    }

    pub fn value(&self, x: f64) -> f64 {
        0.5 * x * x
            - self
                .knots
                .iter()
                .zip(&self.vartheta)
                .map(|(&z, &v)| v * (x - z).max(0.0))
                .sum::<f64>()
    }

    /// Curvature bound `rho` with `-rho <= psi'' <= rho` as seen on `grid`: every jump
    /// of `h'` lands inside a single grid cell, so it is spread over that cell's width.
    pub fn curvature_bound(&self, grid: &Grid1D) -> f64 {
        let h = grid.h();
        let d: Vec<f64> = grid.nodes().iter().map(|x| self.deriv(*x)).collect();
        d.windows(2).map(|w| ((w[1] - w[0]) / h).abs()).fold(1.0, f64::max)
    }
}

/// `f (*) phi`: `f . phi` for `Plus`, `-f . (-phi)` for `Minus`; derivative `f'(+-phi) phi'`.
pub fn circledcirc(f: &StepParams, phi: &Potential1D) -> Result<Potential1D> {
    check_knot_span(f, phi)?;
    let s = f.sign.factor();
    let values = phi.values.iter().map(|&v| s * f.f(s * v)).collect();
    let deriv = phi
        .values
        .iter()
        .zip(&phi.deriv)
        .map(|(&v, &d)| f.fprime(s * v) * d)
        .collect();
    Ok(Potential1D { grid: phi.grid, values, deriv })
}

/// Errors unless the image of `sign * phi` lies within the knot span.
pub fn check_knot_span(f: &StepParams, phi: &Potential1D) -> Result<()> {
    let (lo, hi) = f.span();
    let (mut min, mut max) = phi.range();
    if f.sign == Sign::Minus {
        (min, max) = (-max, -min);
    }
    let tol = 1e-12 * (1.0 + (hi - lo).abs());
    if min < lo - tol || max > hi + tol {
        return Err(Error::KnotSpan { min, max, lo, hi });
    }
    Ok(())
}

/// `K` equally spaced knots on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    if k == 1 {
        return vec![hi];
    }
    (0..k).map(|l| if l + 1 == k { hi } else { lo + (hi - lo) * l as f64 / (k - 1) as f64 }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Density1D, Grid1D};
    use approx::assert_abs_diff_eq;

    fn demo_params(scale: f64, smoothing: Smoothing) -> StepParams {
        let knots = linspace(-0.05, 0.05, 100);
        let theta = (1..=100).map(|l| scale * l as f64).collect();
        StepParams::new(knots, theta, Sign::Plus, smoothing).unwrap()
    }

    #[test]
    fn sign_configs_enumerate_lexicographically() {
        let all = all_sign_configs(2);
        assert_eq!(all.len(), 4);
        assert_eq!(format_signs(&all[0]), "++");
        assert_eq!(format_signs(&all[1]), "+-");
        assert_eq!(format_signs(&all[3]), "--");
        assert_eq!(all_sign_configs(0), vec![Vec::<Sign>::new()]);
    }

    #[test]
    fn param_validation() {
        let k = linspace(0.0, 1.0, 3);
        assert!(StepParams::new(k.clone(), vec![1.0, -1.0, 0.0], Sign::Plus, Smoothing::Step).is_err());
        assert!(StepParams::new(k.clone(), vec![-1.0, -1.0, 0.0], Sign::Minus, Smoothing::Step).is_ok());
        assert!(StepParams::new(vec![0.0, 0.0, 1.0], vec![0.0; 3], Sign::Plus, Smoothing::Step).is_err());
        assert!(PsiParams::new(k, vec![0.1, -0.1, 0.0]).is_err());
    }

    #[test]
    fn setting_one_is_linear() {
        let f = demo_params(2e-4, Smoothing::Sigmoid { theta0: 0.0 });
        for t in [-0.05, -0.01, 0.0, 0.03, 0.05] {
            assert_abs_diff_eq!(f.fprime(t), 0.505, epsilon = 1e-12);
            assert_abs_diff_eq!(f.f(t), 0.505 * (t + 0.05), epsilon = 1e-12);
        }
        let f3 = demo_params(5e-4, Smoothing::Sigmoid { theta0: 0.0 });
        assert_abs_diff_eq!(f3.fprime(0.01), 1.2625, epsilon = 1e-12);
    }

    #[test]
    fn setting_two_class_constants() {
        let f = demo_params(2e-4, Smoothing::Sigmoid { theta0: 100.0 });
        let (k1, k2) = step_derivative_stats(&f, f.span());
        assert!((k1 - 0.9925).abs() / 0.9925 < 0.01, "{k1}");
        assert!((k2 - 13.39).abs() / 13.39 < 0.01, "{k2}");
    }

    #[test]
    fn step_stats() {
        let f = demo_params(2e-4, Smoothing::Step);
        let (k1, k2) = step_derivative_stats(&f, f.span());
        assert_abs_diff_eq!(k1, 1.01, epsilon = 1e-12);
        assert!(k2.is_infinite());
        let z = StepParams::zeros(linspace(-1.0, 1.0, 10), Sign::Plus).unwrap();
        assert_eq!(step_derivative_stats(&z, z.span()), (0.0, 0.0));
    }

    #[test]
    fn step_integral_matches_quadrature() {
        let f = StepParams::new(linspace(-1.0, 1.0, 5), vec![0.5, 0.1, 0.0, 0.3, 0.2], Sign::Plus, Smoothing::Step)
            .unwrap();
        let n = 200_000;
        let t = 0.7;
        let mut acc = 0.0;
        for i in 0..n {
            let s = -1.0 + (t + 1.0) * (i as f64 + 0.5) / n as f64;
            acc += f.fprime(s) * (t + 1.0) / n as f64;
        }
        assert_abs_diff_eq!(f.f(t), acc, epsilon = 1e-5);
        let g = StepParams::new(linspace(-1.0, 1.0, 5), vec![0.5, 0.1, 0.0, 0.3, 0.2], Sign::Plus, Smoothing::Sigmoid {
            theta0: 7.0,
        })
        .unwrap();
        let h = 1e-6;
        assert_abs_diff_eq!((g.f(t + h) - g.f(t - h)) / (2.0 * h), g.fprime(t), epsilon = 1e-7);
        assert_abs_diff_eq!((g.fprime(t + h) - g.fprime(t - h)) / (2.0 * h), g.fsecond(t), epsilon = 1e-6);
    }

    #[test]
    fn circledcirc_scales_displacement() {
        let grid = Grid1D::unit(101);
        let r = Density1D::uniform(grid);
        let phi = Potential1D::from_deriv(grid.nodes().iter().map(|x| 0.05 * (x - 0.5)).collect(), &r).unwrap();
        let f = demo_params(2e-4, Smoothing::Sigmoid { theta0: 0.0 });
        let out = circledcirc(&f, &phi).unwrap();
        for (a, b) in out.deriv.iter().zip(&phi.deriv) {
            assert_abs_diff_eq!(*a, 0.505 * b, epsilon = 1e-15);
        }
        let zero = StepParams::zeros(f.knots.clone(), Sign::Plus).unwrap();
        let out = circledcirc(&zero, &phi).unwrap();
        assert!(out.values.iter().chain(&out.deriv).all(|v| *v == 0.0));
    }

    #[test]
    fn circledcirc_knot_span_error() {
        let grid = Grid1D::unit(11);
        let r = Density1D::uniform(grid);
        let phi = Potential1D::from_deriv(grid.nodes(), &r).unwrap();
        let f = StepParams::zeros(linspace(-0.01, 0.01, 4), Sign::Plus).unwrap();
        assert!(matches!(circledcirc(&f, &phi), Err(Error::KnotSpan { .. })));
    }

    #[test]
    fn minus_sign_composition() {
        let grid = Grid1D::unit(51);
        let r = Density1D::uniform(grid);
        let phi = Potential1D::from_deriv(grid.nodes().iter().map(|x| 0.2 * (x - 0.5)).collect(), &r).unwrap();
        let f = StepParams::new(linspace(-0.1, 0.1, 20), vec![-0.05; 20], Sign::Minus, Smoothing::Step).unwrap();
        let out = circledcirc(&f, &phi).unwrap();
        for i in 0..51 {
            assert_abs_diff_eq!(out.values[i], -f.f(-phi.values[i]), epsilon = 1e-15);
            assert_abs_diff_eq!(out.deriv[i], f.fprime(-phi.values[i]) * phi.deriv[i], epsilon = 1e-15);
        }
    }

    #[test]
    fn level_sets_get_equal_scaling() {
        // phi symmetric about 0.5: nodes i and n-1-i share a level
        let grid = Grid1D::unit(101);
        let r = Density1D::uniform(grid);
        let phi = Potential1D::from_deriv(grid.nodes().iter().map(|x| 0.3 * (x - 0.5)).collect(), &r).unwrap();
        let f = StepParams::new(linspace(-0.05, 0.05, 30), (0..30).map(|l| 0.01 * l as f64).collect(), Sign::Plus, Smoothing::Step)
            .unwrap();
        let out = circledcirc(&f, &phi).unwrap();
        for i in 0..101 {
            let j = 100 - i;
            if phi.values[i] == phi.values[j] {
                assert_eq!(f.fprime(phi.values[i]), f.fprime(phi.values[j]));
                assert_eq!(out.deriv[i], f.fprime(phi.values[i]) * phi.deriv[i]);
            }
        }
    }

    #[test]
    fn psi_parameterization() {
        let p = PsiParams::new(vec![0.0, 0.5], vec![0.0, 0.2]).unwrap();
        assert_abs_diff_eq!(p.deriv(0.25), 0.25);
        assert_abs_diff_eq!(p.deriv(0.75), 0.55);
        let h = 1e-7;
        assert_abs_diff_eq!((p.value(0.8 + h) - p.value(0.8 - h)) / (2.0 * h), p.deriv(0.8), epsilon = 1e-6);
        // the 0.2 drop sits inside one cell of width 0.1
        let g = Grid1D::unit(11);
        assert_abs_diff_eq!(p.curvature_bound(&g), 1.0, epsilon = 1e-12);
        let big = PsiParams::new(vec![0.0, 0.5], vec![0.0, 0.35]).unwrap();
        assert_abs_diff_eq!(big.curvature_bound(&g), 2.5, epsilon = 1e-9);
    }
}
