//! Rate-form and mixture-form parameterizations of Coxian models.
//!
//! The rate form carries the transition rates `lambda` (phase k to k+1) and
//! absorption rates `mu`. The mixture form carries the per-phase hazard
//! `theta_k = lambda_k + mu_k` and the probability `pi_k` of being absorbed
//! from phase k. The two are in one-to-one correspondence for valid models.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probability-mass deficits up to this size are treated as rounding.
pub const MASS_RENORMALIZE_TOLERANCE: f64 = 1e-10;

/// Negative transition rates from the inverse recurrence that are this small
/// (relative to theta_k) are rounding and clamp to zero.
const RECURRENCE_SLACK: f64 = 1e-12;
const LAST_PHASE_SLACK: f64 = 1e-9;

fn check_rate(name: &str, k: usize, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!(
            "{name}_{} = {v} must be finite and nonnegative",
            k + 1
        )))
    }
}

/// Renormalizes probability vectors whose total is within rounding of one.
fn normalize_mass(parts: &mut [&mut Vec<f64>]) -> Result<()> {
    for p in parts.iter() {
        if let Some(v) = p.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidParams(format!(
                "absorption probability {v} must be finite and nonnegative"
            )));
        }
    }
    let sum: f64 = parts.iter().flat_map(|p| p.iter()).sum();
    if (sum - 1.0).abs() > MASS_RENORMALIZE_TOLERANCE {
        return Err(Error::ProbabilityMass { sum });
    }
    for p in parts.iter_mut() {
        p.iter_mut().for_each(|v| *v /= sum);
    }
    Ok(())
}

/// Rate form of a single-exit Coxian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxianParams {
    lambda: Vec<f64>,
    mu: Vec<f64>,
}

impl CoxianParams {
    /// `lambda` has `n - 1` entries, `mu` has `n`.
    pub fn new(lambda: Vec<f64>, mu: Vec<f64>) -> Result<Self> {
        if mu.is_empty() {
            return Err(Error::InvalidParams("a Coxian needs at least one phase".into()));
        }
        if lambda.len() + 1 != mu.len() {
            return Err(Error::InvalidParams(format!(
                "{} phases need {} transition rates, got {}",
                mu.len(),
                mu.len() - 1,
                lambda.len()
            )));
        }
        for (k, &l) in lambda.iter().enumerate() {
            check_rate("lambda", k, l)?;
        }
        for (k, &m) in mu.iter().enumerate() {
            check_rate("mu", k, m)?;
        }
        let params = Self { lambda, mu };
        if let Some(k) = (0..params.phases()).find(|&k| params.exit_rate(k) <= 0.0) {
            return Err(Error::UnleavablePhase { phase: k + 1 });
        }
        Ok(params)
    }

    pub fn phases(&self) -> usize {
        self.mu.len()
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    /// `lambda_k` with the convention `lambda_n = 0`.
    pub fn lambda_at(&self, k: usize) -> f64 {
        self.lambda.get(k).copied().unwrap_or(0.0)
    }

    /// Total rate of leaving phase `k` (zero-based).
    pub fn exit_rate(&self, k: usize) -> f64 {
        self.lambda_at(k) + self.mu[k]
    }

    /// Expected sojourn in each phase, `1 / theta_k`.
    pub fn phase_sojourn_means(&self) -> Vec<f64> {
        (0..self.phases()).map(|k| 1.0 / self.exit_rate(k)).collect()
    }

    /// Probability of absorption from each phase: the exit probability of
    /// phase k times the probability of reaching it.
    pub fn exit_probabilities(&self) -> Vec<f64> {
        let mut reach = 1.0;
        (0..self.phases())
            .map(|k| {
                let theta = self.exit_rate(k);
                let p = reach * self.mu[k] / theta;
                reach *= self.lambda_at(k) / theta;
                p
            })
            .collect()
    }

    pub fn to_mixture(&self) -> Result<MixtureParams> {
        let theta = (0..self.phases()).map(|k| self.exit_rate(k)).collect();
        MixtureParams::new(theta, self.exit_probabilities())
    }
}

/// Mixture form of a single-exit Coxian: route hazards and route weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureParams {
    theta: Vec<f64>,
    pi: Vec<f64>,
}

impl MixtureParams {
    pub fn new(theta: Vec<f64>, mut pi: Vec<f64>) -> Result<Self> {
        validate_theta(&theta)?;
        if pi.len() != theta.len() {
            return Err(Error::InvalidParams(format!(
                "{} rates but {} absorption probabilities",
                theta.len(),
                pi.len()
            )));
        }
        normalize_mass(&mut [&mut pi])?;
        Ok(Self { theta, pi })
    }

    pub fn phases(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    /// Free parameters of an n-phase model: n rates plus n - 1 weights.
    pub fn free_parameter_count(&self) -> usize {
        2 * self.phases() - 1
    }

    /// Recovers the rate form via the forward recurrence on reach probabilities.
    pub fn to_coxian(&self) -> Result<CoxianParams> {
        let (lambda, mut mus) = rates_from_mixture(&self.theta, &[&self.pi])?;
        CoxianParams::new(lambda, mus.remove(0))
    }
}

fn validate_theta(theta: &[f64]) -> Result<()> {
    if theta.is_empty() {
        return Err(Error::InvalidParams("a Coxian needs at least one phase".into()));
    }
    if let Some((k, v)) = theta
        .iter()
        .enumerate()
        .find(|(_, v)| !(v.is_finite() && **v > 0.0))
    {
        return Err(Error::InvalidParams(format!(
            "theta_{} = {v} must be finite and positive",
            k + 1
        )));
    }
    Ok(())
}

/// Shared inverse recurrence: `mu_kj = pi_kj theta_k / R_k`, where `R_k` is
/// the probability of reaching phase k, and `lambda_k = theta_k - sum_j mu_kj`.
/// Equivalent to dividing by the running product of earlier lambdas.
fn rates_from_mixture(theta: &[f64], exits: &[&[f64]]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = theta.len();
    let mut lambda = Vec::with_capacity(n.saturating_sub(1));
    let mut mus = vec![Vec::with_capacity(n); exits.len()];
    let mut reach = 1.0f64;
    for k in 0..n {
        let th = theta[k];
        if k == n - 1 {
            // lambda_n = 0 by convention: everything left exits here
            let total: f64 = exits.iter().map(|p| p[k]).sum();
            for (j, p) in exits.iter().enumerate() {
                let share = if total > 0.0 {
                    p[k] / total
                } else {
                    1.0 / exits.len() as f64
                };
                mus[j].push(th * share);
            }
            if reach > 0.0 {
                // with unit total mass, total == reach up to rounding
                let implied = th - th * total / reach;
                if implied < -LAST_PHASE_SLACK * th {
                    return Err(Error::NotRepresentable {
                        phase: k + 1,
                        value: implied,
                    });
                }
            }
            break;
        }
        let mut absorbed = 0.0;
        for (j, p) in exits.iter().enumerate() {
            let mu = if reach > 0.0 { p[k] * th / reach } else { 0.0 };
            mus[j].push(mu);
            absorbed += mu;
        }
        let mut l = th - absorbed;
        if l < 0.0 {
            if l >= -RECURRENCE_SLACK * th {
                l = 0.0;
            } else {
                return Err(Error::NotRepresentable {
                    phase: k + 1,
                    value: l,
                });
            }
        }
        if reach == 0.0 {
            // unreachable tail: park the rate as absorption
            for m in mus.iter_mut() {
                m[k] = 0.0;
            }
            mus[0][k] = th;
            l = 0.0;
        }
        lambda.push(l);
        reach *= l / th;
    }
    Ok((lambda, mus))
}

/// Rate form of a two-exit Coxian: `mu1` leads to absorbing state 1 (leave
/// the system), `mu2` to absorbing state 2 (next station).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoExitRates {
    pub lambda: Vec<f64>,
    pub mu1: Vec<f64>,
    pub mu2: Vec<f64>,
}

impl TwoExitRates {
    pub fn new(lambda: Vec<f64>, mu1: Vec<f64>, mu2: Vec<f64>) -> Result<Self> {
        let n = mu1.len();
        if n == 0 || mu2.len() != n || lambda.len() + 1 != n {
            return Err(Error::InvalidParams(format!(
                "two-exit rates need n-1, n, n entries; got {}, {}, {}",
                lambda.len(),
                mu1.len(),
                mu2.len()
            )));
        }
        for (k, &v) in lambda.iter().enumerate() {
            check_rate("lambda", k, v)?;
        }
        for k in 0..n {
            check_rate("mu1", k, mu1[k])?;
            check_rate("mu2", k, mu2[k])?;
        }
        let rates = Self { lambda, mu1, mu2 };
        if let Some(k) = (0..n).find(|&k| rates.exit_rate(k) <= 0.0) {
            return Err(Error::UnleavablePhase { phase: k + 1 });
        }
        Ok(rates)
    }

    pub fn phases(&self) -> usize {
        self.mu1.len()
    }

    pub fn lambda_at(&self, k: usize) -> f64 {
        self.lambda.get(k).copied().unwrap_or(0.0)
    }

    pub fn exit_rate(&self, k: usize) -> f64 {
        self.lambda_at(k) + self.mu1[k] + self.mu2[k]
    }

    pub fn to_mixture(&self) -> Result<MultiExitMixtureParams> {
        let n = self.phases();
        let mut pi1 = Vec::with_capacity(n);
        let mut pi2 = Vec::with_capacity(n);
        let mut reach = 1.0;
        let mut theta = Vec::with_capacity(n);
        for k in 0..n {
            let th = self.exit_rate(k);
            theta.push(th);
            pi1.push(reach * self.mu1[k] / th);
            pi2.push(reach * self.mu2[k] / th);
            reach *= self.lambda_at(k) / th;
        }
        MultiExitMixtureParams::new(theta, pi1, pi2)
    }
}

/// Mixture form with two absorbing states. `pi1[k]` and `pi2[k]` are the
/// probabilities of leaving phase k for state 1 and state 2; together they
/// sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiExitMixtureParams {
    theta: Vec<f64>,
    pi1: Vec<f64>,
    pi2: Vec<f64>,
}

impl MultiExitMixtureParams {
    pub fn new(theta: Vec<f64>, mut pi1: Vec<f64>, mut pi2: Vec<f64>) -> Result<Self> {
        validate_theta(&theta)?;
        if pi1.len() != theta.len() || pi2.len() != theta.len() {
            return Err(Error::InvalidParams(format!(
                "{} rates but {} + {} absorption probabilities",
                theta.len(),
                pi1.len(),
                pi2.len()
            )));
        }
        normalize_mass(&mut [&mut pi1, &mut pi2])?;
        Ok(Self { theta, pi1, pi2 })
    }

    /// Single-exit model embedded with `pi2 = 0`.
    pub fn single_exit(params: &MixtureParams) -> Self {
        Self {
            theta: params.theta.clone(),
            pi1: params.pi.clone(),
            pi2: vec![0.0; params.phases()],
        }
    }

    pub fn phases(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn pi1(&self) -> &[f64] {
        &self.pi1
    }

    pub fn pi2(&self) -> &[f64] {
        &self.pi2
    }

    /// Total absorption probability per phase, `pi1 + pi2`.
    pub fn pi_total(&self) -> Vec<f64> {
        self.pi1.iter().zip(&self.pi2).map(|(a, b)| a + b).collect()
    }

    /// Probability of ending in absorbing state 1.
    pub fn exit1_probability(&self) -> f64 {
        self.pi1.iter().sum()
    }

    pub fn exit2_probability(&self) -> f64 {
        self.pi2.iter().sum()
    }

    pub fn has_second_exit(&self) -> bool {
        self.exit2_probability() > 0.0
    }

    /// Route-marginal mixture (both exits merged).
    pub fn marginal(&self) -> MixtureParams {
        MixtureParams {
            theta: self.theta.clone(),
            pi: self.pi_total(),
        }
    }

    pub fn free_parameter_count(&self) -> usize {
        3 * self.phases() - 1
    }

    pub fn to_rates(&self) -> Result<TwoExitRates> {
        let (lambda, mut mus) = rates_from_mixture(&self.theta, &[&self.pi1, &self.pi2])?;
        let mu2 = mus.pop().expect("two exits");
        let mu1 = mus.pop().expect("two exits");
        TwoExitRates::new(lambda, mu1, mu2)
    }
}
