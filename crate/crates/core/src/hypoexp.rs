//! Hypoexponential route densities in partial-fraction form.
//!
//! Route `k` of a Coxian passes through phases `1..=k` and is the sum of `k`
//! independent exponentials. With pairwise distinct rates its density is
//!
//! ```text
//! h_k(t) = sum_{r<=k} C[k][r] * theta_r * exp(-theta_r t),
//! C[k][r] = prod_{c<=k, c!=r} theta_c / (theta_c - theta_r)
//! ```
//!
//! and its survival function is `sum_{r<=k} C[k][r] exp(-theta_r t)`.
//! A weighted mixture of routes collapses to a plain sum of exponentials,
//! which is what [`ExpSum`] evaluates.

use crate::error::{Error, Result};

/// Relative gap at or below which two rates count as numerically equal.
pub const RATE_TIE_TOLERANCE: f64 = 1e-9;
/// Multiplicative nudge applied to the later of two tied rates.
pub const RATE_JITTER: f64 = 1e-7;
/// Densities in `[-NEGATIVE_DENSITY_SLACK, 0)` are rounding noise and clamp to zero.
pub const NEGATIVE_DENSITY_SLACK: f64 = 1e-12;

/// Separates numerically tied rates. Returns `true` if any rate moved.
pub fn jitter_rates(rates: &mut [f64]) -> bool {
    let mut moved = false;
    for r in 1..rates.len() {
        // each nudge strictly increases rates[r], so this terminates
        while (0..r).any(|c| rates_tied(rates[c], rates[r])) {
            rates[r] *= 1.0 + RATE_JITTER;
            moved = true;
        }
    }
    moved
}

fn rates_tied(a: f64, b: f64) -> bool {
    (a - b).abs() <= RATE_TIE_TOLERANCE * a.max(b)
}

fn validate_rates(rates: &[f64]) -> Result<()> {
    if rates.is_empty() {
        return Err(Error::InvalidParams("rate vector is empty".into()));
    }
    if let Some((k, &r)) = rates
        .iter()
        .enumerate()
        .find(|(_, r)| !(r.is_finite() && **r > 0.0))
    {
        return Err(Error::InvalidParams(format!(
            "rate {} = {r} must be finite and positive",
            k + 1
        )));
    }
    Ok(())
}

/// Partial-fraction coefficients for every route prefix of one rate vector.
#[derive(Debug, Clone)]
pub struct RouteTable {
    rates: Vec<f64>,
    // row-major lower triangle: coef[k * n + r] for r <= k
    coef: Vec<f64>,
    jittered: bool,
}

impl RouteTable {
    pub fn new(rates: &[f64]) -> Result<Self> {
        validate_rates(rates)?;
        let mut rates = rates.to_vec();
        let jittered = jitter_rates(&mut rates);
        let n = rates.len();
        let mut coef = vec![0.0; n * n];
        for k in 0..n {
            for r in 0..=k {
                let mut c = 1.0;
                for j in 0..=k {
                    if j != r {
                        c *= rates[j] / (rates[j] - rates[r]);
                    }
                }
                coef[k * n + r] = c;
            }
        }
        Ok(Self {
            rates,
            coef,
            jittered,
        })
    }

    pub fn phases(&self) -> usize {
        self.rates.len()
    }

    /// Rates actually used for evaluation (after any jitter).
    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn jittered(&self) -> bool {
        self.jittered
    }

    /// Coefficient `C[k][r]` (zero-based, `r <= k`).
    pub fn coefficient(&self, k: usize, r: usize) -> f64 {
        debug_assert!(r <= k);
        self.coef[k * self.rates.len() + r]
    }

    /// Density of route `k` (zero-based: route 0 is a single exponential).
    pub fn route_density(&self, k: usize, t: f64) -> f64 {
        (0..=k)
            .map(|r| self.coefficient(k, r) * self.rates[r] * (-self.rates[r] * t).exp())
            .sum()
    }

    pub fn route_survival(&self, k: usize, t: f64) -> f64 {
        (0..=k)
            .map(|r| self.coefficient(k, r) * (-self.rates[r] * t).exp())
            .sum()
    }

    /// Collapses `sum_k weights[k] h_k(t)` into a single sum of exponentials.
    pub fn combine(&self, weights: &[f64]) -> ExpSum {
        let n = self.rates.len();
        assert_eq!(weights.len(), n, "one weight per route");
        let mut survival = vec![0.0; n];
        for (r, s) in survival.iter_mut().enumerate() {
            *s = (r..n).map(|k| weights[k] * self.coefficient(k, r)).sum();
        }
        let density = survival
            .iter()
            .zip(&self.rates)
            .map(|(s, rate)| s * rate)
            .collect();
        ExpSum::new(self.rates.clone(), density, survival)
    }
}

/// `f(t) = sum_r a_r exp(-rate_r t)` with a matching survival expansion.
#[derive(Debug, Clone)]
pub struct ExpSum {
    rates: Vec<f64>,
    density: Vec<f64>,
    survival: Vec<f64>,
    min_rate: f64,
}

impl ExpSum {
    fn new(rates: Vec<f64>, density: Vec<f64>, survival: Vec<f64>) -> Self {
        let min_rate = rates.iter().copied().fold(f64::INFINITY, f64::min);
        Self {
            rates,
            density,
            survival,
            min_rate,
        }
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn density_coefficients(&self) -> &[f64] {
        &self.density
    }

    pub fn min_rate(&self) -> f64 {
        self.min_rate
    }

    /// Raw density value, possibly a tiny negative from cancellation.
    pub fn density_raw(&self, t: f64) -> f64 {
        self.density
            .iter()
            .zip(&self.rates)
            .map(|(a, r)| a * (-r * t).exp())
            .sum()
    }

    /// Log density evaluated relative to the slowest rate so large `t`
    /// does not underflow. Returns `-inf` when the sum is not positive.
    pub fn ln_density(&self, t: f64) -> f64 {
        let g: f64 = self
            .density
            .iter()
            .zip(&self.rates)
            .map(|(a, r)| {
                let d = r - self.min_rate;
                if d == 0.0 {
                    *a
                } else {
                    a * (-d * t).exp()
                }
            })
            .sum();
        if g > 0.0 && g.is_finite() {
            g.ln() - self.min_rate * t
        } else {
            f64::NEG_INFINITY
        }
    }

    /// Density with the rounding clamp: tiny negatives become zero,
    /// anything below the slack is an error.
    pub fn density(&self, t: f64) -> Result<f64> {
        let value = self.density_raw(t);
        clamp_density(t, value)
    }

    pub fn survival_raw(&self, t: f64) -> f64 {
        self.survival
            .iter()
            .zip(&self.rates)
            .map(|(b, r)| b * (-r * t).exp())
            .sum()
    }
}

pub(crate) fn clamp_density(t: f64, value: f64) -> Result<f64> {
    if value >= 0.0 {
        Ok(value)
    } else if value >= -NEGATIVE_DENSITY_SLACK {
        Ok(0.0)
    } else {
        Err(Error::NegativeDensity { t, value })
    }
}

pub(crate) fn check_time(t: f64) -> Result<()> {
    if t.is_finite() && t >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidTime(t))
    }
}

/// Density of the hypoexponential with the given rates (the last route of
/// the rate prefix), after the tie-jitter rule.
pub fn hypoexp_density(rates: &[f64], t: f64) -> Result<f64> {
    check_time(t)?;
    let table = RouteTable::new(rates)?;
    clamp_density(t, table.route_density(rates.len() - 1, t))
}

pub fn hypoexp_survival(rates: &[f64], t: f64) -> Result<f64> {
    check_time(t)?;
    let table = RouteTable::new(rates)?;
    Ok(table.route_survival(rates.len() - 1, t).clamp(0.0, 1.0))
}
