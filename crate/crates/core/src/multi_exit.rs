//! Two absorbing states, station chains, and conditional station densities.
//!
//! Absorbing state 1 is "leave the system", absorbing state 2 is "proceed to
//! the next station". A chain of stations is feed-forward: a patient enters
//! station 1, and at each station either leaves or moves to the first phase
//! of the next one. The final station has a single exit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypoexp::check_time;
use crate::mixture::TwoExitDensity;
use crate::params::MultiExitMixtureParams;

/// One observed sojourn at a station. `exited` is the indicator for having
/// left the system from this station (absorbing state 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExitRecord {
    pub t: f64,
    pub exited: bool,
}

impl ExitRecord {
    pub fn new(t: f64, exited: bool) -> Result<Self> {
        check_time(t)?;
        Ok(Self { t, exited })
    }

    /// Exit indicator as 0/1.
    pub fn alpha(&self) -> u8 {
        u8::from(self.exited)
    }
}

/// `sum_i log{ alpha_i f1(t_i) + (1 - alpha_i) f2(t_i) }`.
pub fn two_exit_loglik(params: &MultiExitMixtureParams, records: &[ExitRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::EmptyData("no records to evaluate".into()));
    }
    let eval = TwoExitDensity::new(params)?;
    let mut total = 0.0;
    for (index, r) in records.iter().enumerate() {
        check_time(r.t)?;
        let ln = eval.ln_density(r.t, r.exited);
        if !ln.is_finite() {
            return Err(Error::ZeroDensity { index, t: r.t });
        }
        total += ln;
    }
    Ok(total)
}

/// Ordered stations; every station but the last must have a second exit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationChain {
    stations: Vec<MultiExitMixtureParams>,
}

impl StationChain {
    pub fn new(stations: Vec<MultiExitMixtureParams>) -> Result<Self> {
        let n = stations.len();
        if n == 0 {
            return Err(Error::InvalidChain("a chain needs at least one station".into()));
        }
        for (m, s) in stations.iter().enumerate() {
            let last = m + 1 == n;
            if last && s.has_second_exit() {
                return Err(Error::InvalidChain(format!(
                    "final station {} must have a single exit (pi2 = 0)",
                    m + 1
                )));
            }
            if !last && !s.has_second_exit() {
                return Err(Error::InvalidChain(format!(
                    "station {} has no route to station {}",
                    m + 1,
                    m + 2
                )));
            }
        }
        Ok(Self { stations })
    }

    pub fn len(&self) -> usize {
        self.stations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stations.is_empty()
    }

    pub fn stations(&self) -> &[MultiExitMixtureParams] {
        &self.stations
    }

    pub fn station(&self, m: usize) -> &MultiExitMixtureParams {
        &self.stations[m]
    }

    /// Probability that a patient leaves the system at each station.
    pub fn exit_station_probabilities(&self) -> Vec<f64> {
        let mut reach = 1.0;
        self.stations
            .iter()
            .map(|s| {
                let p = reach * s.exit1_probability();
                reach *= s.exit2_probability();
                p
            })
            .collect()
    }
}

fn check_path(chain: &StationChain, durations: &[f64], exit_station: usize) -> Result<()> {
    if exit_station == 0 || exit_station > chain.len() {
        return Err(Error::StationOutOfRange {
            index: exit_station,
            len: chain.len(),
        });
    }
    if durations.len() != exit_station {
        return Err(Error::InvalidParams(format!(
            "{} durations for a path ending at station {exit_station}",
            durations.len()
        )));
    }
    durations.iter().try_for_each(|&t| check_time(t))
}

/// Joint density of a path that visits stations `1..=exit_station` (one-based)
/// and leaves the system from the last of them: the product of the
/// "proceed" sub-densities along the way and the "leave" sub-density at the end.
pub fn joint_density(chain: &StationChain, durations: &[f64], exit_station: usize) -> Result<f64> {
    check_path(chain, durations, exit_station)?;
    let mut g = 1.0;
    for (m, &t) in durations.iter().enumerate() {
        let (f1, f2) = chain.station(m).density(t)?;
        g *= if m + 1 == exit_station { f1 } else { f2 };
    }
    Ok(g)
}

/// Density of the current station given the previous station's sojourn
/// `prev_t`: `f2_prev(prev_t) / f_prev(prev_t) * (f1_curr(t), f2_curr(t))`,
/// where `f_prev` is the marginal over both exits of the previous station.
pub fn conditional_density(
    prev: &MultiExitMixtureParams,
    prev_t: f64,
    curr: &MultiExitMixtureParams,
    curr_t: f64,
) -> Result<(f64, f64)> {
    let factor = proceed_probability(prev, prev_t)?;
    let (f1, f2) = curr.density(curr_t)?;
    Ok((factor * f1, factor * f2))
}

/// `f2(t) / (f1(t) + f2(t))`: probability of proceeding given sojourn `t`.
/// This is the conditioning factor of a conditional station density.
pub fn proceed_probability(params: &MultiExitMixtureParams, t: f64) -> Result<f64> {
    let (f1, f2) = params.density(t)?;
    let marginal = f1 + f2;
    if !(marginal > 0.0) {
        return Err(Error::ZeroDensity { index: 0, t });
    }
    Ok(f2 / marginal)
}

/// Joint path density rebuilt from the first station's marginal and the
/// conditional densities of each later station. Intermediate stations use
/// the sum of both conditional components (their route is accounted for by
/// the next conditioning factor); the final station uses the exit component.
pub fn joint_density_via_conditionals(
    chain: &StationChain,
    durations: &[f64],
    exit_station: usize,
) -> Result<f64> {
    check_path(chain, durations, exit_station)?;
    let first = chain.station(0);
    let (a, b) = first.density(durations[0])?;
    if exit_station == 1 {
        return Ok(a);
    }
    let mut g = a + b;
    for m in 1..exit_station {
        let (c1, c2) =
            conditional_density(chain.station(m - 1), durations[m - 1], chain.station(m), durations[m])?;
        g *= if m + 1 == exit_station { c1 } else { c1 + c2 };
    }
    Ok(g)
}
