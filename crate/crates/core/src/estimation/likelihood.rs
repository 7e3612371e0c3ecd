//! Log-likelihood over an unconstrained parameter vector.
//!
//! Layout of `u`: `log theta` (n entries), softmax logits for the
//! absorption weights with the last weight as the reference (one fewer than
//! the number of weights), then covariate slopes. Single-exit models carry
//! n weights, two-exit models carry 2n weights ordered `pi1` then `pi2`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::estimation::data::{CovariateMatrix, FitData};
use crate::estimation::kernel::{lane_sum, ln_sum, mixture_block, BlockTerms, BLOCK};
use crate::hypoexp::RouteTable;
use crate::matrix::GeneratorMatrix;
use crate::params::MultiExitMixtureParams;
use crate::sampler::dot;

/// Which density representation the objective evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityForm {
    /// Closed-form sums of exponentials.
    #[default]
    Mixture,
    /// `p exp(Q t) q` through the matrix exponential.
    Matrix,
}

const MIN_LOGIT_WEIGHT: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Layout {
    pub phases: usize,
    pub two_exit: bool,
    pub covariates: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Unpacked {
    pub theta: Vec<f64>,
    pub weights: Vec<f64>,
    pub beta: Vec<f64>,
}

impl Unpacked {
    pub fn pi1(&self) -> &[f64] {
        &self.weights[..self.theta.len()]
    }

    pub fn pi2(&self) -> Option<&[f64]> {
        let n = self.theta.len();
        (self.weights.len() > n).then(|| &self.weights[n..])
    }
}

impl Layout {
    pub fn weight_count(&self) -> usize {
        if self.two_exit {
            2 * self.phases
        } else {
            self.phases
        }
    }

    pub fn dim(&self) -> usize {
        self.phases + self.weight_count() - 1 + self.covariates
    }

    pub fn logit_range(&self) -> std::ops::Range<usize> {
        self.phases..self.phases + self.weight_count() - 1
    }

    pub fn beta_range(&self) -> std::ops::Range<usize> {
        let start = self.phases + self.weight_count() - 1;
        start..start + self.covariates
    }

    pub fn unpack(&self, u: &[f64]) -> Unpacked {
        debug_assert_eq!(u.len(), self.dim());
        let theta = u[..self.phases].iter().map(|v| v.exp()).collect();
        let logits = &u[self.logit_range()];
        let top = logits.iter().copied().fold(0.0, f64::max);
        let mut weights: Vec<f64> = logits
            .iter()
            .map(|l| (l - top).exp())
            .chain(std::iter::once((-top).exp()))
            .collect();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Unpacked {
            theta,
            weights,
            beta: u[self.beta_range()].to_vec(),
        }
    }

    /// Inverse of [`Layout::unpack`]; zero weights map to a tiny floor.
    pub fn pack(&self, theta: &[f64], weights: &[f64], beta: &[f64]) -> Vec<f64> {
        let reference = weights[weights.len() - 1].max(MIN_LOGIT_WEIGHT).ln();
        theta
            .iter()
            .map(|t| t.ln())
            .chain(
                weights[..weights.len() - 1]
                    .iter()
                    .map(|w| w.max(MIN_LOGIT_WEIGHT).ln() - reference),
            )
            .chain(beta.iter().copied())
            .collect()
    }
}

/// Log-likelihood of `data` under the model encoded by `layout`.
pub(crate) struct Objective<'a> {
    data: &'a FitData,
    layout: Layout,
    form: DensityForm,
    // distinct covariate rows and the pattern index of each record
    patterns: Vec<Vec<f64>>,
    pattern_of: Vec<usize>,
    pattern_counts: Vec<usize>,
    // 1.0 where the record's density is the exit-1 component
    exit1: Vec<f64>,
}

impl<'a> Objective<'a> {
    pub fn new(data: &'a FitData, layout: Layout, form: DensityForm) -> Self {
        let (patterns, pattern_of) = match data.covariates() {
            Some(x) if layout.covariates > 0 => covariate_patterns(x),
            _ => (vec![vec![]], vec![0; data.len()]),
        };
        let mut pattern_counts = vec![0; patterns.len()];
        pattern_of.iter().for_each(|&p| pattern_counts[p] += 1);
        let exit1 = match data.exits() {
            Some(e) if layout.two_exit => e.iter().map(|&v| f64::from(u8::from(v))).collect(),
            _ => vec![1.0; data.len()],
        };
        Self {
            data,
            layout,
            form,
            patterns,
            pattern_of,
            pattern_counts,
            exit1,
        }
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    /// `-inf` when the parameters are infeasible or a record has zero density.
    pub fn loglik(&self, u: &[f64]) -> f64 {
        self.loglik_unpacked(&self.layout.unpack(u))
    }

    pub fn loglik_unpacked(&self, p: &Unpacked) -> f64 {
        if p.theta.iter().any(|t| !(t.is_finite() && *t > 0.0)) || p.beta.iter().any(|b| !b.is_finite())
        {
            return f64::NEG_INFINITY;
        }
        match self.form {
            DensityForm::Mixture => self.loglik_mixture(p),
            DensityForm::Matrix => self.loglik_matrix(p),
        }
    }

    /// Log rate multiplier `-x . beta` for every covariate pattern.
    fn log_scales(&self, beta: &[f64]) -> Vec<f64> {
        self.patterns.iter().map(|x| -dot(x, beta)).collect()
    }

    fn uses_exit1(&self, i: usize) -> bool {
        self.exit1[i] == 1.0
    }

    fn loglik_mixture(&self, p: &Unpacked) -> f64 {
        let table = match RouteTable::new(&p.theta) {
            Ok(t) => t,
            Err(_) => return f64::NEG_INFINITY,
        };
        let rates = table.rates();
        let slowest = (0..rates.len())
            .min_by(|&a, &b| rates[a].total_cmp(&rates[b]))
            .unwrap_or(0);
        let min_rate = rates[slowest];
        let exit1 = table.combine(p.pi1());
        let exit2 = p.pi2().map(|w| table.combine(w));
        let a1 = exit1.density_coefficients();
        let a2 = exit2.as_ref().map_or(a1, |e| e.density_coefficients());
        let others = |a: &[f64]| -> Vec<f64> {
            (0..a.len()).filter(|&r| r != slowest).map(|r| a[r]).collect()
        };
        let shifted: Vec<f64> = others(rates).iter().map(|r| r - min_rate).collect();
        let (c1, c2) = (others(a1), others(a2));
        let terms = BlockTerms {
            shifted: &shifted,
            c1: &c1,
            c2: &c2,
            base1: a1[slowest],
            base2: a2[slowest],
        };

        let log_scales = self.log_scales(&p.beta);
        let scales: Vec<f64> = log_scales.iter().map(|v| v.exp()).collect();
        let t = self.data.t();
        let mut tau = [0.0; BLOCK];
        let mut g = [0.0; BLOCK];
        let mut total: f64 = log_scales
            .iter()
            .zip(&self.pattern_counts)
            .map(|(l, &c)| l * c as f64)
            .sum();
        let mut tau_total = 0.0;
        for start in (0..t.len()).step_by(BLOCK) {
            let end = (start + BLOCK).min(t.len());
            let len = end - start;
            if scales.len() == 1 {
                for (x, &ti) in tau[..len].iter_mut().zip(&t[start..end]) {
                    *x = ti * scales[0];
                }
            } else {
                for (j, x) in tau[..len].iter_mut().enumerate() {
                    *x = t[start + j] * scales[self.pattern_of[start + j]];
                }
            }
            tau_total += lane_sum(&tau[..len]);
            mixture_block(&terms, &tau[..len], &self.exit1[start..end], &mut g[..len]);
            match ln_sum(&g[..len]) {
                Some(v) => total += v,
                None => return f64::NEG_INFINITY,
            }
        }
        total - min_rate * tau_total
    }

    fn loglik_matrix(&self, p: &Unpacked) -> f64 {
        let n = p.theta.len();
        let pi2 = p.pi2().map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; n]);
        let rates = MultiExitMixtureParams::new(p.theta.clone(), p.pi1().to_vec(), pi2)
            .and_then(|m| m.to_rates());
        let generator = match rates {
            Ok(r) => GeneratorMatrix::from_two_exit(&r),
            Err(_) => return f64::NEG_INFINITY,
        };
        let log_scales = self.log_scales(&p.beta);
        let mut total = 0.0;
        for (i, &t) in self.data.t().iter().enumerate() {
            let ln_s = log_scales[self.pattern_of[i]];
            let ln = generator.ln_densities(t * ln_s.exp());
            let v = if self.uses_exit1(i) { ln[0] } else { ln[1] };
            if !v.is_finite() {
                return f64::NEG_INFINITY;
            }
            total += ln_s + v;
        }
        total
    }
}

fn covariate_patterns(x: &CovariateMatrix) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut patterns = Vec::new();
    let pattern_of = (0..x.rows())
        .map(|i| {
            let row = x.row(i);
            let key: Vec<u64> = row.iter().map(|v| v.to_bits()).collect();
            *index.entry(key).or_insert_with(|| {
                patterns.push(row.to_vec());
                patterns.len() - 1
            })
        })
        .collect();
    (patterns, pattern_of)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multi_exit::{two_exit_loglik, ExitRecord};
    use crate::params::MixtureParams;

    #[test]
    fn pack_roundtrip() {
        let layout = Layout {
            phases: 3,
            two_exit: true,
            covariates: 2,
        };
        let theta = [0.5, 2.0, 0.1];
        let w = [0.1, 0.2, 0.05, 0.3, 0.15, 0.2];
        let beta = [0.3, -0.7];
        let u = layout.pack(&theta, &w, &beta);
        assert_eq!(u.len(), layout.dim());
        assert_eq!(layout.dim(), 3 + 5 + 2);
        let p = layout.unpack(&u);
        for (a, b) in p.theta.iter().zip(theta) {
            assert!((a - b).abs() < 1e-14);
        }
        for (a, b) in p.weights.iter().zip(w) {
            assert!((a - b).abs() < 1e-14);
        }
        assert_eq!(p.beta, beta);
    }

    #[test]
    fn forms_agree_with_direct_evaluation() {
        let t = vec![0.2, 1.5, 3.0, 7.5];
        let exits = vec![true, false, false, true];
        let data = FitData::new(t.clone(), Some(exits.clone()), None).unwrap();
        let layout = Layout {
            phases: 2,
            two_exit: true,
            covariates: 0,
        };
        let theta = [1.4, 0.3];
        let w = [0.2, 0.3, 0.4, 0.1];
        let u = layout.pack(&theta, &w, &[]);
        let params = MultiExitMixtureParams::new(theta.to_vec(), w[..2].to_vec(), w[2..].to_vec()).unwrap();
        let records: Vec<ExitRecord> = t
            .iter()
            .zip(&exits)
            .map(|(&t, &e)| ExitRecord::new(t, e).unwrap())
            .collect();
        let direct = two_exit_loglik(&params, &records).unwrap();
        let mixture = Objective::new(&data, layout, DensityForm::Mixture).loglik(&u);
        let matrix = Objective::new(&data, layout, DensityForm::Matrix).loglik(&u);
        assert!((mixture - direct).abs() < 1e-10 * direct.abs());
        assert!((matrix - direct).abs() < 1e-9 * direct.abs());
    }

    #[test]
    fn covariate_scaling_matches_rescaled_rates() {
        use crate::estimation::data::CovariateMatrix;
        let t = vec![0.5, 2.0];
        let x = CovariateMatrix::from_rows(vec!["x".into()], &[[1.0], [0.0]]).unwrap();
        let data = FitData::durations(t.clone()).unwrap().with_covariates(x).unwrap();
        let layout = Layout {
            phases: 2,
            two_exit: false,
            covariates: 1,
        };
        let theta = [1.0, 0.4];
        let pi = [0.3, 0.7];
        let beta = 0.6f64;
        let u = layout.pack(&theta, &pi, &[beta]);
        let ll = Objective::new(&data, layout, DensityForm::Mixture).loglik(&u);
        let s = (-beta).exp();
        let scaled = MixtureParams::new(theta.iter().map(|v| v * s).collect(), pi.to_vec()).unwrap();
        let base = MixtureParams::new(theta.to_vec(), pi.to_vec()).unwrap();
        let expected = scaled.density(0.5).unwrap().ln() + base.density(2.0).unwrap().ln();
        assert!((ll - expected).abs() < 1e-12);
    }
}
