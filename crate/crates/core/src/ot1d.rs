//! Closed-form one-dimensional optimal transport.
//!
//! In 1D the optimal map between absolutely continuous measures is the
//! monotone rearrangement `T = Q_target . F_source`, so everything here is
//! built from CDFs and quantile functions on a shared grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{cdf, Density1D, Grid1D};

/// Number of midpoint levels used for quantile-space quadrature.
pub const W2_LEVELS: usize = 2048;

/// Density threshold below which a node is treated as outside the support.
pub const SUPPORT_EPS: f64 = 1e-6;

const MONOTONE_TOL: f64 = 1e-12;

/// Map values at the nodes of its source grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportMap1D {
    pub grid: Grid1D,
    pub values: Vec<f64>,
}

impl TransportMap1D {
    pub fn new(grid: Grid1D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n {
            return Err(Error::Dimension(format!(
                "map has {} values for a {}-node grid",
                values.len(),
                grid.n
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn identity(grid: Grid1D) -> Self {
        Self { grid, values: grid.nodes() }
    }

    pub fn from_fn(grid: Grid1D, f: impl Fn(f64) -> f64) -> Self {
        Self { grid, values: grid.nodes().into_iter().map(f).collect() }
    }

    /// First node `i` with `T(x_{i+1}) < T(x_i)`.
    pub fn first_violation(&self) -> Option<usize> {
        self.values
            .windows(2)
            .position(|w| w[1] < w[0] - MONOTONE_TOL * (1.0 + w[0].abs()))
    }

    pub fn is_monotone(&self) -> bool {
        self.first_violation().is_none()
    }

    pub fn check_monotone(&self) -> Result<()> {
        match self.first_violation() {
            None => Ok(()),
            Some(i) => Err(Error::NotMonotone {
                node: i,
                left: self.values[i],
                right: self.values[i + 1],
            }),
        }
    }

    /// [`first_violation`](Self::first_violation) restricted to node pairs where
    /// `reference` has density above [`SUPPORT_EPS`].
    pub fn first_violation_on(&self, reference: &Density1D) -> Option<usize> {
        let rho = reference.values();
        self.values.windows(2).enumerate().position(|(i, w)| {
            rho[i] > SUPPORT_EPS && rho[i + 1] > SUPPORT_EPS && w[1] < w[0] - MONOTONE_TOL * (1.0 + w[0].abs())
        })
    }

    /// Monotone wherever `reference` carries mass; behavior off its support is irrelevant
    /// to the pushforward of `reference`.
    pub fn check_monotone_on(&self, reference: &Density1D) -> Result<()> {
        match self.first_violation_on(reference) {
            None => Ok(()),
            Some(i) => Err(Error::NotMonotone {
                node: i,
                left: self.values[i],
                right: self.values[i + 1],
            }),
        }
    }

    /// Evaluate by linear interpolation between nodes.
    pub fn eval(&self, x: f64) -> f64 {
        self.grid.interp(&self.values, x)
    }

    /// `T(x) - x` at the nodes.
    pub fn displacement(&self) -> Vec<f64> {
        self.values.iter().zip(self.grid.nodes()).map(|(t, x)| t - x).collect()
    }

    /// `self . inner`: apply `inner` first.
    pub fn compose(&self, inner: &TransportMap1D) -> TransportMap1D {
        TransportMap1D {
            grid: inner.grid,
            values: inner.values.iter().map(|&y| self.eval(y)).collect(),
        }
    }
}

/// Kantorovich potential with its derivative, `T = id - deriv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Potential1D {
    pub grid: Grid1D,
    pub values: Vec<f64>,
    pub deriv: Vec<f64>,
}

impl Potential1D {
    pub fn zero(grid: Grid1D) -> Self {
        Self { grid, values: vec![0.0; grid.n], deriv: vec![0.0; grid.n] }
    }

    /// Potential from a derivative: integrate from the left end, then center against `reference`.
    pub fn from_deriv(deriv: Vec<f64>, reference: &Density1D) -> Result<Self> {
        let grid = *reference.grid();
        if deriv.len() != grid.n {
            return Err(Error::Dimension(format!(
                "derivative has {} values for a {}-node grid",
                deriv.len(),
                grid.n
            )));
        }
        let values = grid.cumulative(&deriv);
        let mut p = Self { grid, values, deriv };
        p.center(reference);
        Ok(p)
    }

    /// Shift so that the integral against `reference` vanishes.
    pub fn center(&mut self, reference: &Density1D) {
        let c = reference.expect(&self.values);
        self.values.iter_mut().for_each(|v| *v -= c);
    }

    /// `T_phi = id - phi'`.
    pub fn map(&self) -> TransportMap1D {
        TransportMap1D {
            grid: self.grid,
            values: self.grid.nodes().iter().zip(&self.deriv).map(|(x, d)| x - d).collect(),
        }
    }

    /// Second derivative by differencing `deriv` (central inside, one-sided at the ends).
    pub fn second_derivative(&self) -> Vec<f64> {
        let n = self.grid.n;
        let h = self.grid.h();
        let d = &self.deriv;
        (0..n)
            .map(|i| {
                if i == 0 {
                    (d[1] - d[0]) / h
                } else if i == n - 1 {
                    (d[n - 1] - d[n - 2]) / h
                } else {
                    (d[i + 1] - d[i - 1]) / (2.0 * h)
                }
            })
            .collect()
    }

    /// Curvature bounds `(gamma_minus, gamma_plus)` with `-gamma_minus <= phi'' <= gamma_plus`
    /// over nodes where `reference` exceeds [`SUPPORT_EPS`].
    pub fn curvature_bounds(&self, reference: &Density1D) -> (f64, f64) {
        let second = self.second_derivative();
        let mut gm = 0.0f64;
        let mut gp = 0.0f64;
        for (s, r) in second.iter().zip(reference.values()) {
            if *r > SUPPORT_EPS {
                gm = gm.max(-s);
                gp = gp.max(*s);
            }
        }
        (gm, gp)
    }

    /// `min` and `max` of the node values.
    pub fn range(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)))
    }

    /// Re-express on another grid through an affine alignment, `phi . tau`.
    pub fn align(&self, tau: &AffineAlignment, target: Grid1D) -> Potential1D {
        let s = tau.slope();
        let mut values = Vec::with_capacity(target.n);
        let mut deriv = Vec::with_capacity(target.n);
        for x in target.nodes() {
            let y = tau.apply(x);
            values.push(self.grid.interp(&self.values, y));
            deriv.push(self.grid.interp(&self.deriv, y) * s);
        }
        Potential1D { grid: target, values, deriv }
    }
}

/// Affine map `tau` sending `[from_lo, from_hi]` onto `[to_lo, to_hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineAlignment {
    pub from_lo: f64,
    pub from_hi: f64,
    pub to_lo: f64,
    pub to_hi: f64,
}

impl AffineAlignment {
    pub fn between(from: &Grid1D, to: &Grid1D) -> Self {
        Self { from_lo: from.lo, from_hi: from.hi, to_lo: to.lo, to_hi: to.hi }
    }

    pub fn slope(&self) -> f64 {
        (self.to_hi - self.to_lo) / (self.from_hi - self.from_lo)
    }

    pub fn apply(&self, x: f64) -> f64 {
        self.to_lo + (x - self.from_lo) * self.slope()
    }

    pub fn inverse(&self) -> Self {
        Self { from_lo: self.to_lo, from_hi: self.to_hi, to_lo: self.from_lo, to_hi: self.from_hi }
    }
}

fn check_domains(a: &Grid1D, b: &Grid1D) -> Result<()> {
    if a.same_domain(b) {
        Ok(())
    } else {
        Err(Error::DomainMismatch(a.lo, a.hi, b.lo, b.hi))
    }
}

/// Monotone rearrangement `T(x) = Q_target(F_source(x))` at the source nodes.
pub fn ot_map(source: &Density1D, target: &Density1D) -> Result<TransportMap1D> {
    check_domains(source.grid(), target.grid())?;
    let fs = cdf(source);
    let ct = cdf(target);
    Ok(TransportMap1D { grid: *source.grid(), values: ct.quantiles_sorted(fs.values()) })
}

/// [`ot_map`] for densities on different intervals: the target is first carried onto
/// the source interval by the affine alignment between the two domains.
pub fn ot_map_aligned(source: &Density1D, target: &Density1D) -> Result<TransportMap1D> {
    let tau = AffineAlignment::between(target.grid(), source.grid());
    let fs = cdf(source);
    let ct = cdf(target);
    let values = ct.quantiles_sorted(fs.values()).into_iter().map(|y| tau.apply(y)).collect();
    Ok(TransportMap1D { grid: *source.grid(), values })
}

fn midpoint_levels(m: usize) -> Vec<f64> {
    (0..m).map(|k| (k as f64 + 0.5) / m as f64).collect()
}

/// Quadratic Wasserstein distance by midpoint quadrature in quantile space.
pub fn w2(a: &Density1D, b: &Density1D) -> f64 {
    let us = midpoint_levels(W2_LEVELS);
    let qa = cdf(a).quantiles_sorted(&us);
    let qb = cdf(b).quantiles_sorted(&us);
    let sq: Vec<f64> = qa.iter().zip(&qb).map(|(x, y)| (x - y) * (x - y)).collect();
    (crate::par::pairwise_sum(&sq) / W2_LEVELS as f64).sqrt()
}

/// `W2(target, map_# reference)` without materializing the pushforward density:
/// for a monotone map the pushforward quantile is `T(Q_reference(u))`.
pub fn w2_to_pushforward(target: &Density1D, reference: &Density1D, map: &TransportMap1D) -> f64 {
    let us = midpoint_levels(W2_LEVELS);
    let qt = cdf(target).quantiles_sorted(&us);
    let qr = cdf(reference).quantiles_sorted(&us);
    let sq: Vec<f64> = qt
        .iter()
        .zip(&qr)
        .map(|(y, x)| {
            let d = y - map.eval(*x);
            d * d
        })
        .collect();
    (crate::par::pairwise_sum(&sq) / W2_LEVELS as f64).sqrt()
}

/// Centered potential of a monotone map: `phi' = id - T`, `integral phi d(reference) = 0`.
pub fn potential_from_map(map: &TransportMap1D, reference: &Density1D) -> Result<Potential1D> {
    if map.grid != *reference.grid() {
        return Err(Error::Dimension("map and reference live on different grids".into()));
    }
    map.check_monotone()?;
    let deriv = map.grid.nodes().iter().zip(&map.values).map(|(x, t)| x - t).collect();
    Potential1D::from_deriv(deriv, reference)
}

/// Weighted Wasserstein barycenter: the density whose quantile function is the
/// weighted mean of the input quantile functions.
pub fn barycenter(ds: &[Density1D], weights: Option<&[f64]>) -> Result<Density1D> {
    let first = ds.first().ok_or(Error::EmptyInput)?;
    let grid = *first.grid();
    for d in ds {
        check_domains(&grid, d.grid())?;
    }
    let w: Vec<f64> = match weights {
        None => vec![1.0 / ds.len() as f64; ds.len()],
        Some(w) => {
            if w.len() != ds.len() {
                return Err(Error::Dimension(format!("{} weights for {} densities", w.len(), ds.len())));
            }
            if w.iter().any(|x| *x < 0.0 || !x.is_finite()) {
                return Err(Error::InvalidParameter("weights must be nonnegative".into()));
            }
            let s: f64 = w.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::BadWeights(s));
            }
            w.to_vec()
        }
    };
    let cdfs: Vec<_> = ds.iter().map(cdf).collect();
    let qbar = |u: f64| -> f64 {
        cdfs.iter().zip(&w).map(|(c, wi)| wi * c.quantile_unchecked(u)).sum()
    };
    let (lo_support, hi_support) = (qbar(0.0), qbar(1.0));
    let nodes = grid.nodes();
    let values = crate::par::map_slice(&nodes, |&x| {
        if x < lo_support || x > hi_support {
            return 0.0;
        }
        // invert the mean quantile function by bisection
        let (mut a, mut b) = (0.0f64, 1.0f64);
        for _ in 0..60 {
            let m = 0.5 * (a + b);
            if qbar(m) < x {
                a = m;
            } else {
                b = m;
            }
        }
        let u = 0.5 * (a + b);
        // density = 1 / (sum_i w_i / rho_i(Q_i(u)))
        let mut inv = 0.0;
        for ((c, d), wi) in cdfs.iter().zip(ds).zip(&w) {
            if *wi == 0.0 {
                continue;
            }
            let rho = grid.interp(d.values(), c.quantile_unchecked(u));
            if rho <= 0.0 {
                return 0.0;
            }
            inv += wi / rho;
        }
        if inv > 0.0 {
            1.0 / inv
        } else {
            0.0
        }
    });
    Density1D::new(grid, values)
}

/// Density of `map_# reference` on the reference grid.
///
/// On each cell the map is linear with slope `s`, so the pushed density there is the
/// reference (linearly interpolated) divided by `s`. Cells the map collapses to a point
/// carry an atom that a grid density cannot hold; that mass is dropped and the result
/// renormalized.
pub fn pushforward(reference: &Density1D, map: &TransportMap1D) -> Result<Density1D> {
    let grid = *reference.grid();
    if map.grid != grid {
        return Err(Error::Dimension("map and reference live on different grids".into()));
    }
    // only the support of the reference constrains the map
    map.check_monotone_on(reference)?;
    let rho = reference.values();
    let tol = 1e-9 * (grid.hi - grid.lo);
    // fitted maps can overshoot the boundary by optimizer residue; the sliver is dropped
    let escape = 1e-6 * (grid.hi - grid.lo);
    for (i, &t) in map.values.iter().enumerate() {
        if rho[i] > SUPPORT_EPS && (t < grid.lo - escape || t > grid.hi + escape) {
            return Err(Error::OutOfDomain { node: i, value: t, lo: grid.lo, hi: grid.hi });
        }
    }
    let t = &map.values;
    let h = grid.h();
    let n = grid.n;
    let mut out = vec![0.0; n];
    // each source cell spreads its mass over the output nodes in [T(x_c), T(x_{c+1}))
    for c in 0..n - 1 {
        if rho[c] == 0.0 && rho[c + 1] == 0.0 {
            continue;
        }
        let (a, b) = (t[c], t[c + 1]);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let width = hi - lo;
        if width <= 0.0 {
            continue;
        }
        let mut k = (((lo - grid.lo) / h).ceil().max(0.0) as usize).min(n);
        while k > 0 && grid.node(k - 1) >= lo {
            k -= 1;
        }
        while k < n && grid.node(k) < lo {
            k += 1;
        }
        let mut splat = |k: usize| {
            let s = (grid.node(k) - a) / (b - a);
            out[k] += (rho[c] * (1.0 - s) + rho[c + 1] * s) * h / width;
        };
        while k < n && grid.node(k) < hi {
            splat(k);
            k += 1;
        }
        // a map ending exactly on the last node still covers it
        if c == n - 2 && a < b && k == n - 1 && (grid.node(k) - b).abs() <= tol {
            splat(k);
        }
    }
    Density1D::new(grid, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn t1(x: f64) -> f64 {
        (1.0 - (-x).exp()) / (1.0 - (-1.0f64).exp())
    }

    #[test]
    fn identity_map_for_equal_densities() {
        let g = Grid1D::unit(501);
        let d = Density1D::truncated_normal(g, 0.45, 0.15).unwrap();
        let t = ot_map(&d, &d).unwrap();
        for (x, y) in g.nodes().iter().zip(&t.values) {
            assert_abs_diff_eq!(x, y, epsilon = g.h());
        }
    }

    #[test]
    fn translation_map() {
        let g = Grid1D::unit(1001);
        let a = Density1D::truncated_normal(g, 0.4, 0.05).unwrap();
        let b = Density1D::truncated_normal(g, 0.5, 0.05).unwrap();
        let t = ot_map(&a, &b).unwrap();
        for (i, x) in g.nodes().iter().enumerate() {
            if (x - 0.4).abs() < 0.1 {
                assert_abs_diff_eq!(t.values[i], x + 0.1, epsilon = 2.0 * g.h());
            }
        }
    }

    #[test]
    fn domain_mismatch_is_an_error() {
        let a = Density1D::uniform(Grid1D::unit(11));
        let b = Density1D::uniform(Grid1D::new(0.0, 2.0, 11).unwrap());
        assert!(matches!(ot_map(&a, &b), Err(Error::DomainMismatch(..))));
        // the aligned variant maps [0, 2] onto [0, 1] first
        let t = ot_map_aligned(&a, &b).unwrap();
        for (x, y) in Grid1D::unit(11).nodes().iter().zip(&t.values) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-9);
        }
    }

    #[test]
    fn recovers_exponential_map() {
        let g = Grid1D::unit(2001);
        let src = Density1D::truncated_normal(g, 0.5, 0.1).unwrap();
        let tgt = pushforward(&src, &TransportMap1D::from_fn(g, t1)).unwrap();
        let t = ot_map(&src, &tgt).unwrap();
        let c = cdf(&src);
        let (a, b) = (c.quantile(0.01).unwrap(), c.quantile(0.99).unwrap());
        let worst = g
            .nodes()
            .iter()
            .zip(&t.values)
            .filter(|(x, _)| **x >= a && **x <= b)
            .map(|(x, y)| (y - t1(*x)).abs())
            .fold(0.0, f64::max);
        assert!(worst < 5e-3, "sup error {worst}");
    }

    #[test]
    fn w2_basics() {
        let g = Grid1D::unit(2001);
        let a = Density1D::truncated_normal(g, 0.4, 0.05).unwrap();
        let b = Density1D::truncated_normal(g, 0.6, 0.05).unwrap();
        assert!(w2(&a, &a) < 1e-8);
        assert_abs_diff_eq!(w2(&a, &b), 0.2, epsilon = 1e-3);
        assert_abs_diff_eq!(w2(&a, &b), w2(&b, &a), epsilon = 1e-12);
        let c = Density1D::truncated_normal(g, 0.47, 0.05).unwrap();
        assert_abs_diff_eq!(w2(&a, &c), 0.07, epsilon = 1e-3);
    }

    #[test]
    fn potential_of_identity_and_translation() {
        let g = Grid1D::unit(101);
        let r = Density1D::uniform(g);
        let p = potential_from_map(&TransportMap1D::identity(g), &r).unwrap();
        assert!(p.values.iter().all(|v| v.abs() < 1e-15));
        let p = potential_from_map(&TransportMap1D::from_fn(g, |x| x + 0.1), &r).unwrap();
        for (x, v) in g.nodes().iter().zip(&p.values) {
            // phi = -0.1 x + 0.05 centers against the uniform reference
            assert_abs_diff_eq!(*v, -0.1 * x + 0.05, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(r.expect(&p.values), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn non_monotone_map_rejected() {
        let g = Grid1D::unit(11);
        let mut v = g.nodes();
        v[5] = 0.9;
        let m = TransportMap1D::new(g, v).unwrap();
        let err = potential_from_map(&m, &Density1D::uniform(g)).unwrap_err();
        assert!(matches!(err, Error::NotMonotone { node: 5, .. }));
    }

    #[test]
    fn roundtrip_potential_map() {
        let g = Grid1D::unit(301);
        let r = Density1D::truncated_normal(g, 0.5, 0.2).unwrap();
        let m = TransportMap1D::from_fn(g, |x| x * x);
        let p = potential_from_map(&m, &r).unwrap();
        assert_eq!(p.map().values.len(), m.values.len());
        for (a, b) in p.map().values.iter().zip(&m.values) {
            assert!((a - b).abs() <= 1e-15);
        }
        // central differences of values agree with the stored derivative
        let h = g.h();
        for i in 1..300 {
            let fd = (p.values[i + 1] - p.values[i - 1]) / (2.0 * h);
            assert_abs_diff_eq!(fd, p.deriv[i], epsilon = 4.0 * h * h);
        }
    }

    #[test]
    fn demo_curvatures() {
        let g = Grid1D::unit(2001);
        let r = Density1D::truncated_normal(g, 0.5, 0.1).unwrap();
        let e = std::f64::consts::E;
        let maps = [
            TransportMap1D::from_fn(g, t1),
            TransportMap1D::from_fn(g, |x| (x.exp() - 1.0) / (e - 1.0)),
            TransportMap1D::from_fn(g, |x| 3.0 * x - t1(x) - (x.exp() - 1.0) / (e - 1.0)),
        ];
        let (mut gm, mut gp) = (0.0f64, 0.0f64);
        for m in &maps {
            let (a, b) = potential_from_map(m, &r).unwrap().curvature_bounds(&r);
            gm = gm.max(a);
            gp = gp.max(b);
        }
        assert!((gm - 0.5820).abs() / 0.5820 < 0.02, "gamma- {gm}");
        assert!((gp - 0.4180).abs() / 0.4180 < 0.02, "gamma+ {gp}");
    }

    #[test]
    fn barycenter_errors() {
        let g = Grid1D::unit(11);
        assert!(matches!(barycenter(&[], None), Err(Error::EmptyInput)));
        let d = Density1D::uniform(g);
        assert!(matches!(barycenter(&[d.clone(), d], Some(&[0.3, 0.3])), Err(Error::BadWeights(_))));
    }

    #[test]
    fn barycenter_identical_inputs() {
        let g = Grid1D::unit(401);
        let d = Density1D::truncated_normal(g, 0.4, 0.12).unwrap();
        let b = barycenter(&[d.clone(), d.clone(), d.clone()], None).unwrap();
        assert!(w2(&b, &d) < g.h());
    }

    #[test]
    fn barycenter_of_shifted_gaussians() {
        let g = Grid1D::unit(2001);
        let a = Density1D::truncated_normal(g, 0.4, 0.05).unwrap();
        let b = Density1D::truncated_normal(g, 0.6, 0.05).unwrap();
        let mid = Density1D::truncated_normal(g, 0.5, 0.05).unwrap();
        let bar = barycenter(&[a, b], None).unwrap();
        assert!(w2(&bar, &mid) <= 2e-3);
    }

    #[test]
    fn barycenter_weighted() {
        let g = Grid1D::unit(2001);
        let a = Density1D::truncated_normal(g, 0.3, 0.05).unwrap();
        let b = Density1D::truncated_normal(g, 0.7, 0.05).unwrap();
        let bar = barycenter(&[a, b], Some(&[0.75, 0.25])).unwrap();
        assert_abs_diff_eq!(bar.mean(), 0.4, epsilon = 1e-3);
    }

    #[test]
    fn pushforward_identity_and_affine() {
        let g = Grid1D::unit(201);
        let r = Density1D::truncated_normal(g, 0.5, 0.2).unwrap();
        let p = pushforward(&r, &TransportMap1D::identity(g)).unwrap();
        for (a, b) in p.values().iter().zip(r.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
        let u = Density1D::uniform(g);
        let p = pushforward(&u, &TransportMap1D::from_fn(g, |x| 0.5 * x + 0.25)).unwrap();
        for (x, v) in g.nodes().iter().zip(p.values()) {
            if *x > 0.25 + g.h() && *x < 0.75 - g.h() {
                // flat top; renormalisation of the two jump cells costs O(h)
                assert_abs_diff_eq!(*v, 2.0, epsilon = 4.0 * g.h());
            } else if *x < 0.25 - g.h() || *x > 0.75 + g.h() {
                assert_eq!(*v, 0.0);
            }
        }
        assert_abs_diff_eq!(p.mean(), 0.5, epsilon = g.h());
    }

    #[test]
    fn pushforward_rejects_escaping_map() {
        let g = Grid1D::unit(11);
        let u = Density1D::uniform(g);
        let err = pushforward(&u, &TransportMap1D::from_fn(g, |x| x + 0.2)).unwrap_err();
        assert!(matches!(err, Error::OutOfDomain { .. }));
    }

    #[test]
    fn pushforward_roundtrip() {
        let g = Grid1D::unit(1001);
        let mu = Density1D::truncated_normal(g, 0.5, 0.12).unwrap();
        let nu = Density1D::from_fn(g, |x| 0.3 + (-(x - 0.3).powi(2) / 0.01).exp()).unwrap();
        let t = ot_map(&mu, &nu).unwrap();
        let back = pushforward(&mu, &t).unwrap();
        assert!(w2(&back, &nu) <= 2.0 * g.h(), "{}", w2(&back, &nu));
    }

    #[test]
    fn monge_equals_quantile_form() {
        let g = Grid1D::unit(2001);
        let a = Density1D::truncated_normal(g, 0.45, 0.1).unwrap();
        let b = Density1D::from_fn(g, |x| 1.0 + x).unwrap();
        let t = ot_map(&a, &b).unwrap();
        let sq: Vec<f64> = g.nodes().iter().zip(&t.values).map(|(x, y)| (x - y).powi(2)).collect();
        let monge = a.expect(&sq);
        assert_abs_diff_eq!(w2(&a, &b).powi(2), monge, epsilon = 1e-5);
        assert!(w2_to_pushforward(&b, &a, &t) < 1e-5);
        let id = TransportMap1D::identity(g);
        assert_abs_diff_eq!(w2_to_pushforward(&b, &a, &id), w2(&a, &b), epsilon = 1e-12);
    }

    #[test]
    fn barycenter_first_order_condition() {
        let g = Grid1D::unit(1001);
        let ds: Vec<Density1D> = [(0.35, 0.08), (0.5, 0.1), (0.6, 0.06), (0.45, 0.12)]
            .iter()
            .map(|&(m, s)| Density1D::truncated_normal(g, m, s).unwrap())
            .collect();
        let bar = barycenter(&ds, None).unwrap();
        let mut mean_disp = vec![0.0; g.n];
        for d in &ds {
            for (acc, v) in mean_disp.iter_mut().zip(ot_map(&bar, d).unwrap().displacement()) {
                *acc += v / ds.len() as f64;
            }
        }
        let c = cdf(&bar);
        let (lo, hi) = (c.quantile(0.01).unwrap(), c.quantile(0.99).unwrap());
        for (x, v) in g.nodes().iter().zip(&mean_disp) {
            if *x >= lo && *x <= hi {
                assert!(v.abs() <= 3.0 * g.h(), "x = {x}: {v}");
            }
        }
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        fn mixture(g: Grid1D, a: f64, b: f64, s: f64) -> Density1D {
            Density1D::from_fn(g, |x| {
                0.05 + (-(x - a).powi(2) / (2.0 * s * s)).exp() + 0.5 * (-(x - b).powi(2) / (2.0 * s * s)).exp()
            })
            .unwrap()
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]
            #[test]
            fn ot_map_is_monotone(a in 0.1f64..0.9, b in 0.1f64..0.9, c in 0.1f64..0.9, s in 0.03f64..0.3) {
                let g = Grid1D::unit(257);
                let src = mixture(g, a, b, s);
                let tgt = mixture(g, c, 1.0 - c, s * 0.7);
                let t = ot_map(&src, &tgt).unwrap();
                prop_assert!(t.is_monotone());
                prop_assert!(t.values.iter().all(|v| *v >= 0.0 && *v <= 1.0));
            }
        }
    }
}
