//! Density, survival and moments of Coxian models in mixture form.

use crate::error::Result;
use crate::hypoexp::{check_time, clamp_density, ExpSum, RouteTable};
use crate::params::{MixtureParams, MultiExitMixtureParams};

/// Precomputed evaluator for one parameter set; cheap to apply at many times.
#[derive(Debug, Clone)]
pub struct MixtureDensity {
    sum: ExpSum,
    jittered: bool,
}

impl MixtureDensity {
    pub fn new(params: &MixtureParams) -> Result<Self> {
        let table = RouteTable::new(params.theta())?;
        Ok(Self {
            sum: table.combine(params.pi()),
            jittered: table.jittered(),
        })
    }

    /// Whether tied rates were separated before evaluation.
    pub fn jittered(&self) -> bool {
        self.jittered
    }

    pub fn density(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        self.sum.density(t)
    }

    pub fn ln_density(&self, t: f64) -> f64 {
        self.sum.ln_density(t)
    }

    pub fn survival(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(self.sum.survival_raw(t).clamp(0.0, 1.0))
    }
}

/// Evaluator for the two sub-densities of a two-exit model.
#[derive(Debug, Clone)]
pub struct TwoExitDensity {
    exit1: ExpSum,
    exit2: ExpSum,
    jittered: bool,
}

impl TwoExitDensity {
    pub fn new(params: &MultiExitMixtureParams) -> Result<Self> {
        let table = RouteTable::new(params.theta())?;
        Ok(Self {
            exit1: table.combine(params.pi1()),
            exit2: table.combine(params.pi2()),
            jittered: table.jittered(),
        })
    }

    pub fn jittered(&self) -> bool {
        self.jittered
    }

    /// `(f1(t), f2(t))`.
    pub fn density(&self, t: f64) -> Result<(f64, f64)> {
        check_time(t)?;
        Ok((self.exit1.density(t)?, self.exit2.density(t)?))
    }

    /// Log of `f1` (`exit1 = true`) or `f2`.
    pub fn ln_density(&self, t: f64, exit1: bool) -> f64 {
        if exit1 {
            self.exit1.ln_density(t)
        } else {
            self.exit2.ln_density(t)
        }
    }

    /// Sub-survival functions `(P(T > t, exit 1), P(T > t, exit 2))`.
    pub fn survival(&self, t: f64) -> Result<(f64, f64)> {
        check_time(t)?;
        Ok((
            self.exit1.survival_raw(t).max(0.0),
            self.exit2.survival_raw(t).max(0.0),
        ))
    }
}

/// Mean of route k: `1/theta_1 + ... + 1/theta_k`, for every k.
fn route_means(theta: &[f64]) -> impl Iterator<Item = f64> + '_ {
    theta.iter().scan(0.0, |acc, th| {
        *acc += 1.0 / th;
        Some(*acc)
    })
}

fn weighted_route_mean(theta: &[f64], weights: &[f64]) -> f64 {
    route_means(theta).zip(weights).map(|(m, w)| m * w).sum()
}

impl MixtureParams {
    pub fn density(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        let table = RouteTable::new(self.theta())?;
        clamp_density(t, table.combine(self.pi()).density_raw(t))
    }

    pub fn survival(&self, t: f64) -> Result<f64> {
        MixtureDensity::new(self)?.survival(t)
    }

    pub fn evaluator(&self) -> Result<MixtureDensity> {
        MixtureDensity::new(self)
    }

    /// Unconditional mean absorption time.
    pub fn mean(&self) -> f64 {
        weighted_route_mean(self.theta(), self.pi())
    }
}

impl MultiExitMixtureParams {
    pub fn density(&self, t: f64) -> Result<(f64, f64)> {
        TwoExitDensity::new(self)?.density(t)
    }

    pub fn evaluator(&self) -> Result<TwoExitDensity> {
        TwoExitDensity::new(self)
    }

    /// `(E[T; exit 1], E[T; exit 2])`: sub-means that add up to `E[T]`.
    pub fn partial_means(&self) -> (f64, f64) {
        (
            weighted_route_mean(self.theta(), self.pi1()),
            weighted_route_mean(self.theta(), self.pi2()),
        )
    }

    /// Mean duration among those leaving through each exit; `NaN` for an
    /// exit with zero probability.
    pub fn conditional_means(&self) -> (f64, f64) {
        let (m1, m2) = self.partial_means();
        (
            m1 / self.exit1_probability(),
            m2 / self.exit2_probability(),
        )
    }
}
