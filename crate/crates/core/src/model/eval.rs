//! Shared forward/backward evaluation of the quadratic objective on a fixed dataset.
//!
//! The objective is linear-quadratic in `(theta, vartheta)`, so the same engine serves
//! the loss, the gradients, and Hessian-vector products (as gradient differences).

use crate::error::Result;
use crate::model::dataset::Dataset;
use crate::model::params::{check_knot_span, PsiParams, Smoothing, StepParams};
use crate::par;

struct StepLayout {
    params: StepParams,
    /// `idx[i][m]`: first knot index `l` with `z_l >= s * phi_i(x_m)`; only for exact steps.
    idx: Option<Vec<Vec<u32>>>,
}

struct PsiLayout {
    /// number of knots `z_l <= x_m`
    idx: Vec<u32>,
    k: usize,
}

pub(crate) struct Problem<'a> {
    pub data: &'a Dataset,
    pub weights: Vec<f64>,
    pub nodes: Vec<f64>,
    steps: Vec<StepLayout>,
    psis: Vec<PsiLayout>,
}

impl<'a> Problem<'a> {
    /// Only knots, signs and smoothing of the parameter templates are used; their values are ignored.
    pub fn new(data: &'a Dataset, steps: &[StepParams], psis: &[PsiParams]) -> Result<Self> {
        let n = data.n();
        let nodes = data.grid().nodes();
        let mut layouts = Vec::with_capacity(steps.len());
        for (j, f) in steps.iter().enumerate() {
            if !data.is_degenerate(j) {
                for i in 0..n {
                    check_knot_span(f, data.potential(i, j))?;
                }
            }
            let idx = match f.smoothing {
                Smoothing::Step => {
                    let s = f.sign.factor();
                    Some(
                        (0..n)
                            .map(|i| {
                                data.potential(i, j)
                                    .values
                                    .iter()
                                    .map(|&v| {
                                        let t = s * v;
                                        f.knots.partition_point(|&z| z < t) as u32
                                    })
                                    .collect()
                            })
                            .collect(),
                    )
                }
                Smoothing::Sigmoid { .. } => None,
            };
            let mut params = f.clone();
            params.theta.iter_mut().for_each(|t| *t = 0.0);
            layouts.push(StepLayout { params, idx });
        }
        let psis = psis
            .iter()
            .map(|ps| PsiLayout {
                idx: nodes.iter().map(|&x| ps.knots.partition_point(|&z| z <= x) as u32).collect(),
                k: ps.k(),
            })
            .collect();
        Ok(Self { data, weights: data.nu_bar().quadrature_weights(), nodes, steps: layouts, psis })
    }

    pub fn p(&self) -> usize {
        self.steps.len()
    }

    pub fn q(&self) -> usize {
        self.psis.len()
    }

    /// `f_j'(s phi_i) phi_i'` at every node, per record.
    pub fn displacement(&self, j: usize, theta: &[f64]) -> Vec<Vec<f64>> {
        let lay = &self.steps[j];
        let data = self.data;
        match &lay.idx {
            Some(idx) => {
                // suffix sums: f'(t) = sum of theta over knots >= t
                let k = theta.len();
                let mut suffix = vec![0.0; k + 1];
                for l in (0..k).rev() {
                    suffix[l] = suffix[l + 1] + theta[l];
                }
                par::map_indexed(data.n(), |i| {
                    let d = &data.potential(i, j).deriv;
                    idx[i].iter().zip(d).map(|(&l, &dv)| suffix[l as usize] * dv).collect()
                })
            }
            None => {
                let mut f = lay.params.clone();
                f.theta = theta.to_vec();
                let s = f.sign.factor();
                par::map_indexed(data.n(), |i| {
                    let ph = data.potential(i, j);
                    ph.values.iter().zip(&ph.deriv).map(|(&v, &dv)| f.fprime(s * v) * dv).collect()
                })
            }
        }
    }

    /// `h_k'(x_m)` with `psi_k' = x - h_k'`.
    pub fn psi_hprime(&self, k: usize, vartheta: &[f64]) -> Vec<f64> {
        let mut prefix = vec![0.0; vartheta.len() + 1];
        for l in 0..vartheta.len() {
            prefix[l + 1] = prefix[l] + vartheta[l];
        }
        self.psis[k].idx.iter().map(|&c| prefix[c as usize]).collect()
    }

    /// Model maps `T_{Phi_i}(x_m)` with intercepts recomputed from the current `theta`.
    pub fn model_maps(&self, theta: &[Vec<f64>], vartheta: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = self.data.n();
        let m = self.nodes.len();
        let mut grad_phi = vec![vec![0.0; m]; n];
        for (j, th) in theta.iter().enumerate() {
            let g = self.displacement(j, th);
            let mean = par::pairwise_sum_rows(&g);
            for (row, gi) in grad_phi.iter_mut().zip(&g) {
                for ((acc, v), mu) in row.iter_mut().zip(gi).zip(&mean) {
                    *acc += v - mu / n as f64;
                }
            }
        }
        for (k, vt) in vartheta.iter().enumerate() {
            let hp = self.psi_hprime(k, vt);
            for (i, row) in grad_phi.iter_mut().enumerate() {
                let z = self.data.z_hat(i, k);
                if z != 0.0 {
                    for ((acc, x), h) in row.iter_mut().zip(&self.nodes).zip(&hp) {
                        *acc += z * (x - h);
                    }
                }
            }
        }
        for row in grad_phi.iter_mut() {
            for (v, x) in row.iter_mut().zip(&self.nodes) {
                *v = x - *v;
            }
        }
        grad_phi
    }

    /// `r_i = T_{Phi_i} - T_{nu_bar -> nu_i}` at the nodes.
    pub fn residuals(&self, theta: &[Vec<f64>], vartheta: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let mut maps = self.model_maps(theta, vartheta);
        for (i, row) in maps.iter_mut().enumerate() {
            for (v, r) in row.iter_mut().zip(&self.data.response_map(i).values) {
                *v -= r;
            }
        }
        maps
    }

    /// `(1/n) sum_i integral r_i^2 d nu_bar`.
    pub fn loss(&self, res: &[Vec<f64>]) -> f64 {
        let per = par::map_slice(res, |r| {
            let sq: Vec<f64> = r.iter().zip(&self.weights).map(|(v, w)| w * v * v).collect();
            par::pairwise_sum(&sq)
        });
        par::pairwise_sum(&per) / res.len() as f64
    }

    pub fn grad_theta(&self, res: &[Vec<f64>], j: usize) -> Vec<f64> {
        let n = self.data.n();
        let lay = &self.steps[j];
        let k = lay.params.k();
        let mean = par::pairwise_sum_rows(res);
        let scale = -2.0 / n as f64;
        match &lay.idx {
            Some(idx) => {
                let buckets = par::map_indexed(n, |i| {
                    let mut b = vec![0.0; k + 1];
                    let d = &self.data.potential(i, j).deriv;
                    for m in 0..self.nodes.len() {
                        let delta = res[i][m] - mean[m] / n as f64;
                        b[idx[i][m] as usize] += self.weights[m] * delta * d[m];
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
            }
            None => {
                let f = &lay.params;
                let s = f.sign.factor();
                let rows = par::map_indexed(n, |i| {
                    let ph = self.data.potential(i, j);
                    let mut g = vec![0.0; k];
                    for m in 0..self.nodes.len() {
                        let delta = res[i][m] - mean[m] / n as f64;
                        let base = self.weights[m] * delta * ph.deriv[m];
                        if base == 0.0 {
                            continue;
                        }
                        let t = s * ph.values[m];
                        for (l, gl) in g.iter_mut().enumerate() {
                            *gl += base * f.basis(l, t);
                        }
                    }
                    g
                });
                par::pairwise_sum_rows(&rows).into_iter().map(|v| scale * v).collect()
            }
        }
    }

    pub fn grad_vartheta(&self, res: &[Vec<f64>], k: usize) -> Vec<f64> {
        let n = self.data.n();
        let lay = &self.psis[k];
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let z = self.data.z_hat(i, k);
                res[i].iter().map(|r| z * r).collect()
            })
            .collect();
        let a = par::pairwise_sum_rows(&rows);
        let mut buckets = vec![0.0; lay.k + 1];
        for m in 0..self.nodes.len() {
            buckets[lay.idx[m] as usize] += self.weights[m] * a[m];
        }
        // 1{x >= z_l} holds exactly for the nodes with idx > l
        let scale = 2.0 / n as f64;
        let mut out = vec![0.0; lay.k];
        let mut acc = 0.0;
        for l in (0..lay.k).rev() {
            acc += buckets[l + 1];
            out[l] = scale * acc;
        }
        out
    }

    pub fn gradient(&self, res: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let gt = (0..self.p()).map(|j| self.grad_theta(res, j)).collect();
        let gv = (0..self.q()).map(|k| self.grad_vartheta(res, k)).collect();
        (gt, gv)
    }
}
