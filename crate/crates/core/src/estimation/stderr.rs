//! Standard errors from the observed information.
//!
//! The Hessian is taken by central differences in the unconstrained space
//! (log rates, softmax logits, slopes) and mapped back with the delta
//! method. Weights below [`BOUNDARY_WEIGHT`] sit on the boundary of the
//! simplex; they are held fixed and get no standard error.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::data::FitData;
use crate::estimation::fit::FitResult;
use crate::estimation::likelihood::{DensityForm, Layout, Objective, Unpacked};

pub const BOUNDARY_WEIGHT: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StdErrors {
    pub theta: Vec<f64>,
    pub pi: Vec<Option<f64>>,
    pub pi2: Option<Vec<Option<f64>>>,
    pub beta: Vec<f64>,
    /// Parameters held at the boundary, e.g. `pi2[3]`.
    pub fixed: Vec<String>,
}

/// Free coordinates: `log theta`, logits of the interior weights against the
/// largest weight, then slopes.
struct LocalMap {
    theta: Vec<f64>,
    weights: Vec<f64>,
    beta: Vec<f64>,
    reference: usize,
    free: Vec<usize>,
    boundary_mass: f64,
}

impl LocalMap {
    fn new(theta: Vec<f64>, weights: Vec<f64>, beta: Vec<f64>) -> Self {
        let reference = (0..weights.len())
            .max_by(|&a, &b| weights[a].total_cmp(&weights[b]))
            .unwrap_or(0);
        let free = (0..weights.len())
            .filter(|&i| i != reference && weights[i] >= BOUNDARY_WEIGHT)
            .collect();
        let boundary_mass = weights.iter().filter(|w| **w < BOUNDARY_WEIGHT).sum();
        Self {
            theta,
            weights,
            beta,
            reference,
            free,
            boundary_mass,
        }
    }

    fn dim(&self) -> usize {
        self.theta.len() + self.free.len() + self.beta.len()
    }

    fn point(&self) -> Vec<f64> {
        let lr = self.weights[self.reference].ln();
        self.theta
            .iter()
            .map(|t| t.ln())
            .chain(self.free.iter().map(|&i| self.weights[i].ln() - lr))
            .chain(self.beta.iter().copied())
            .collect()
    }

    fn natural(&self, v: &[f64]) -> Unpacked {
        let n = self.theta.len();
        let f = self.free.len();
        let theta = v[..n].iter().map(|x| x.exp()).collect();
        let logits = &v[n..n + f];
        let top = logits.iter().copied().fold(0.0, f64::max);
        let mut weights = self.weights.clone();
        let mut total = (-top).exp();
        for (&i, l) in self.free.iter().zip(logits) {
            weights[i] = (l - top).exp();
            total += weights[i];
        }
        weights[self.reference] = (-top).exp();
        let scale = (1.0 - self.boundary_mass) / total;
        weights[self.reference] *= scale;
        for &i in &self.free {
            weights[i] *= scale;
        }
        Unpacked {
            theta,
            weights,
            beta: v[n + f..].to_vec(),
        }
    }

    /// Jacobian of `(theta, weights, beta)` with respect to the free coordinates.
    fn jacobian(&self) -> DMatrix<f64> {
        let n = self.theta.len();
        let w = self.weights.len();
        let f = self.free.len();
        let l = self.beta.len();
        let mut j = DMatrix::zeros(n + w + l, self.dim());
        for k in 0..n {
            j[(k, k)] = self.theta[k];
        }
        let interior = 1.0 - self.boundary_mass;
        let mut rows: Vec<usize> = self.free.clone();
        rows.push(self.reference);
        for &i in &rows {
            for (c, &jj) in self.free.iter().enumerate() {
                let delta = if i == jj { 1.0 } else { 0.0 };
                j[(n + i, n + c)] = self.weights[i] * (delta - self.weights[jj] / interior);
            }
        }
        for b in 0..l {
            j[(n + w + b, n + f + b)] = 1.0;
        }
        j
    }
}

/// Observed-information standard errors for `result` on the data it was fitted to.
pub fn standard_errors(result: &FitResult, data: &FitData) -> Result<StdErrors> {
    let layout = Layout {
        phases: result.phases,
        two_exit: result.is_two_exit(),
        covariates: result.beta().len(),
    };
    let mut data = data.clone();
    if layout.covariates == 0 {
        data = data.without_covariates();
    }
    if !layout.two_exit {
        data = data.without_exits();
    } else if data.exits().is_none() {
        return Err(Error::InvalidParams("two-exit fit needs labelled data".into()));
    }
    if data.len() != result.n_obs {
        return Err(Error::LengthMismatch {
            previous: result.n_obs,
            current: data.len(),
        });
    }
    let mut weights = result.pi.clone();
    if let Some(p2) = &result.pi2 {
        weights.extend_from_slice(p2);
    }
    let map = LocalMap::new(result.theta.clone(), weights, result.beta().to_vec());
    let objective = Objective::new(&data, layout, DensityForm::Mixture);
    let f = |v: &[f64]| objective.loglik_unpacked(&map.natural(v));
    let v0 = map.point();
    let hessian = hessian(&f, &v0);
    let information = -hessian;
    let eig = SymmetricEigen::new(information);
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let max = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(min > 0.0) || !min.is_finite() || !max.is_finite() {
        return Err(Error::NotPositiveDefinite {
            min_eigenvalue: min,
            max_eigenvalue: max,
        });
    }
    let inv = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v));
    let cov = &eig.eigenvectors * inv * eig.eigenvectors.transpose();
    let jac = map.jacobian();
    let natural = &jac * cov * jac.transpose();
    let se = |i: usize| natural[(i, i)].max(0.0).sqrt();

    let n = layout.phases;
    let w = layout.weight_count();
    let boundary = |i: usize| map.weights[i] < BOUNDARY_WEIGHT;
    let weight_se: Vec<Option<f64>> = (0..w)
        .map(|i| (!boundary(i)).then(|| se(n + i)))
        .collect();
    let mut fixed = Vec::new();
    for i in (0..w).filter(|&i| boundary(i)) {
        if i < n {
            fixed.push(format!("pi[{}]", i + 1));
        } else {
            fixed.push(format!("pi2[{}]", i - n + 1));
        }
    }
    Ok(StdErrors {
        theta: (0..n).map(se).collect(),
        pi: weight_se[..n].to_vec(),
        pi2: layout.two_exit.then(|| weight_se[n..].to_vec()),
        beta: (0..layout.covariates).map(|b| se(n + w + b)).collect(),
        fixed,
    })
}

/// Central-difference Hessian with steps `eps^(1/4) * max(1, |v_i|)`.
fn hessian<F: Fn(&[f64]) -> f64>(f: &F, v: &[f64]) -> DMatrix<f64> {
    let d = v.len();
    let h: Vec<f64> = v
        .iter()
        .map(|x| f64::EPSILON.powf(0.25) * x.abs().max(1.0))
        .collect();
    let f0 = f(v);
    let at = |moves: &[(usize, f64)]| {
        let mut x = v.to_vec();
        for &(i, s) in moves {
            x[i] += s;
        }
        f(&x)
    };
    let mut m = DMatrix::zeros(d, d);
    for i in 0..d {
        let fp = at(&[(i, 2.0 * h[i])]);
        let fm = at(&[(i, -2.0 * h[i])]);
        m[(i, i)] = (fp - 2.0 * f0 + fm) / (4.0 * h[i] * h[i]);
        for j in 0..i {
            let pp = at(&[(i, h[i]), (j, h[j])]);
            let pm = at(&[(i, h[i]), (j, -h[j])]);
            let mp = at(&[(i, -h[i]), (j, h[j])]);
            let mm = at(&[(i, -h[i]), (j, -h[j])]);
            let v = (pp - pm - mp + mm) / (4.0 * h[i] * h[j]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}
