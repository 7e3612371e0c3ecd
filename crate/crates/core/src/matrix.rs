//! Matrix-exponential form of Coxian densities.
//!
//! This is the reference path: `f(t) = p exp(Q t) q` with `Q` the
//! upper-bidiagonal generator. The mixture form in [`crate::mixture`] must
//! agree with it. `exp` is nalgebra's scaling-and-squaring Padé routine.

use nalgebra::{DMatrix, DVector, RowDVector};

use crate::error::{Error, Result};
use crate::hypoexp::{check_time, clamp_density};
use crate::params::{CoxianParams, TwoExitRates};

/// Above this value of `max_k theta_k * t` the exponential is computed on
/// the shifted generator `Q + c I` with the factor `exp(-c t)` kept in log form.
pub const SPECTRAL_LIMIT: f64 = 700.0;

#[derive(Debug, Clone)]
pub struct GeneratorMatrix {
    q: DMatrix<f64>,
    initial: RowDVector<f64>,
    // one column per absorbing state
    exits: DMatrix<f64>,
}

impl GeneratorMatrix {
    pub fn from_coxian(params: &CoxianParams) -> Self {
        let n = params.phases();
        let lambda: Vec<f64> = (0..n).map(|k| params.lambda_at(k)).collect();
        Self::build(&lambda, &[params.mu()])
    }

    pub fn from_two_exit(rates: &TwoExitRates) -> Self {
        let n = rates.phases();
        let lambda: Vec<f64> = (0..n).map(|k| rates.lambda_at(k)).collect();
        Self::build(&lambda, &[&rates.mu1, &rates.mu2])
    }

    fn build(lambda: &[f64], exits: &[&[f64]]) -> Self {
        let n = lambda.len();
        let mut q = DMatrix::zeros(n, n);
        let mut exit_cols = DMatrix::zeros(n, exits.len());
        for k in 0..n {
            let absorbed: f64 = exits.iter().map(|mu| mu[k]).sum();
            q[(k, k)] = -(lambda[k] + absorbed);
            if k + 1 < n {
                q[(k, k + 1)] = lambda[k];
            }
            for (j, mu) in exits.iter().enumerate() {
                exit_cols[(k, j)] = mu[k];
            }
        }
        let mut initial = RowDVector::zeros(n);
        initial[0] = 1.0;
        Self {
            q,
            initial,
            exits: exit_cols,
        }
    }

    pub fn phases(&self) -> usize {
        self.q.nrows()
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn initial(&self) -> &RowDVector<f64> {
        &self.initial
    }

    /// Absorption-rate column for absorbing state `j` (zero-based).
    pub fn exit_column(&self, j: usize) -> DVector<f64> {
        self.exits.column(j).into_owned()
    }

    pub fn exit_count(&self) -> usize {
        self.exits.ncols()
    }

    /// Total absorption-rate vector `q = -Q 1`.
    pub fn total_exit(&self) -> DVector<f64> {
        -(&self.q * DVector::from_element(self.phases(), 1.0))
    }

    /// `exp(Q t)` as `(M, s)` with `exp(Q t) = e^s M`.
    pub fn exp_scaled(&self, t: f64) -> (DMatrix<f64>, f64) {
        let n = self.phases();
        let fastest = (0..n).map(|k| -self.q[(k, k)]).fold(0.0, f64::max);
        if fastest * t <= SPECTRAL_LIMIT {
            return ((&self.q * t).exp(), 0.0);
        }
        let slowest = (0..n)
            .map(|k| -self.q[(k, k)])
            .fold(f64::INFINITY, f64::min);
        let shifted = (&self.q + DMatrix::identity(n, n) * slowest) * t;
        (shifted.exp(), -slowest * t)
    }

    /// `ln(p exp(Q t) q_j)` for every absorbing state; `-inf` for zero mass.
    pub fn ln_densities(&self, t: f64) -> Vec<f64> {
        let (m, log_scale) = self.exp_scaled(t);
        let row = &self.initial * m;
        (0..self.exit_count())
            .map(|j| {
                let v = row.dot(&self.exits.column(j).transpose());
                if v > 0.0 {
                    v.ln() + log_scale
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect()
    }

    /// `p exp(Q t) q_j` for every absorbing state.
    pub fn densities(&self, t: f64) -> Result<Vec<f64>> {
        check_time(t)?;
        let (m, log_scale) = self.exp_scaled(t);
        let row = &self.initial * m;
        let scale = log_scale.exp();
        (0..self.exit_count())
            .map(|j| {
                let v = row.dot(&self.exits.column(j).transpose());
                if !v.is_finite() {
                    return Err(Error::NumericRange(format!(
                        "matrix exponential is not finite at t = {t}"
                    )));
                }
                clamp_density(t, v * scale)
            })
            .collect()
    }

    /// `-p Q^{-1} 1`.
    pub fn mean(&self) -> Result<f64> {
        let ones = DVector::from_element(self.phases(), 1.0);
        let solved = self
            .q
            .clone()
            .lu()
            .solve(&ones)
            .ok_or_else(|| Error::NumericRange("generator is singular".into()))?;
        Ok(-(&self.initial * solved)[0])
    }
}

/// Reference single-exit density `p exp(Q t) q`.
pub fn density_matrix(params: &CoxianParams, t: f64) -> Result<f64> {
    Ok(GeneratorMatrix::from_coxian(params).densities(t)?[0])
}

/// Reference two-exit densities `(p exp(Q t) q1, p exp(Q t) q2)`.
pub fn density_two_exit_matrix(rates: &TwoExitRates, t: f64) -> Result<(f64, f64)> {
    let d = GeneratorMatrix::from_two_exit(rates).densities(t)?;
    Ok((d[0], d[1]))
}

/// Reference mean `-p Q^{-1} 1`.
pub fn mean_matrix(params: &CoxianParams) -> Result<f64> {
    GeneratorMatrix::from_coxian(params).mean()
}

/// Station-to-station transfer matrix: `q_{m,2}` in the first column, zeros
/// elsewhere, i.e. the outer product `q_{m,2} (1, 0, ..., 0)`.
pub fn transfer_matrix(from: &GeneratorMatrix, to_phases: usize) -> DMatrix<f64> {
    let mut t = DMatrix::zeros(from.phases(), to_phases);
    t.set_column(0, &from.exit_column(1));
    t
}

/// Joint path density with materialized transfer matrices:
/// `p_1 e^{Q_1 t_1} T_12 e^{Q_2 t_2} ... T_{L-1,L} e^{Q_L t_L} q_{L,1}`.
/// `stations[..exit_station]` are the visited stations (one-based exit).
pub fn joint_density_matrix(
    stations: &[TwoExitRates],
    durations: &[f64],
    exit_station: usize,
) -> Result<f64> {
    if exit_station == 0 || exit_station > stations.len() {
        return Err(Error::StationOutOfRange {
            index: exit_station,
            len: stations.len(),
        });
    }
    if durations.len() != exit_station {
        return Err(Error::InvalidParams(format!(
            "{} durations for a path ending at station {exit_station}",
            durations.len()
        )));
    }
    let gens: Vec<GeneratorMatrix> = stations[..exit_station]
        .iter()
        .map(GeneratorMatrix::from_two_exit)
        .collect();
    let mut row = gens[0].initial().clone();
    let mut log_scale = 0.0;
    for (m, g) in gens.iter().enumerate() {
        check_time(durations[m])?;
        let (e, s) = g.exp_scaled(durations[m]);
        log_scale += s;
        row *= e;
        if m + 1 < exit_station {
            row *= transfer_matrix(g, gens[m + 1].phases());
        }
    }
    let last = gens.last().expect("nonempty path");
    let v = row.dot(&last.exit_column(0).transpose());
    clamp_density(durations[exit_station - 1], v * log_scale.exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_density() {
        let c = CoxianParams::new(vec![], vec![0.5]).unwrap();
        let v = density_matrix(&c, 2.0).unwrap();
        assert!((v - 0.5 * (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn density_at_origin_is_first_exit_rate() {
        let c = CoxianParams::new(vec![1.2, 0.4], vec![0.7, 2.0, 0.3]).unwrap();
        assert!((density_matrix(&c, 0.0).unwrap() - 0.7).abs() < 1e-14);
    }

    #[test]
    fn generator_invariants() {
        let r = TwoExitRates::new(vec![1.0, 0.5], vec![0.1, 0.2, 0.3], vec![0.4, 0.0, 0.6])
            .unwrap();
        let g = GeneratorMatrix::from_two_exit(&r);
        let q = g.q();
        let total = g.total_exit();
        for k in 0..3 {
            let row_sum: f64 = q.row(k).iter().sum();
            assert!((row_sum + g.exit_column(0)[k] + g.exit_column(1)[k]).abs() < 1e-15);
            assert!((total[k] - g.exit_column(0)[k] - g.exit_column(1)[k]).abs() < 1e-15);
            assert!(q[(k, k)] <= 0.0);
            for j in 0..3 {
                if j != k {
                    assert!(q[(k, j)] >= 0.0);
                }
            }
        }
    }

    #[test]
    fn shifted_exponential_matches_direct() {
        let c = CoxianParams::new(vec![30.0], vec![10.0, 0.05]).unwrap();
        let g = GeneratorMatrix::from_coxian(&c);
        // 40 * 20 = 800 > limit forces the shifted path
        let shifted = g.ln_densities(20.0)[0];
        let m = c.to_mixture().unwrap();
        let direct = m.density(20.0).unwrap().ln();
        assert!((shifted - direct).abs() < 1e-9, "{shifted} vs {direct}");
    }

    #[test]
    fn mean_of_exponential() {
        let c = CoxianParams::new(vec![], vec![0.25]).unwrap();
        assert!((mean_matrix(&c).unwrap() - 4.0).abs() < 1e-14);
    }
}
