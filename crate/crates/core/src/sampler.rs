//! Exact simulation of Coxian sojourns, two-exit sojourns and station paths.
//!
//! The generator is ChaCha8 (`rand_chacha`), seeded with
//! `ChaCha8Rng::seed_from_u64(seed)`. Parallel workers derive independent
//! streams from one seed with [`worker_rng`], which selects ChaCha stream
//! number `worker` on the same key.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::covariates::{CovariateDistribution, CovariateEncoding};
use crate::error::{Error, Result};
use crate::multi_exit::StationChain;
use crate::params::{CoxianParams, MixtureParams, MultiExitMixtureParams, TwoExitRates};

pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `worker` derived from `seed`.
pub fn worker_rng(seed: u64, worker: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(worker);
    rng
}

/// Uniform on the open interval (0, 1).
fn open_unit<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

fn exponential<R: RngCore + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    -open_unit(rng).ln() / rate
}

/// Index drawn from unnormalized-but-summing-to-one weights.
fn categorical<R: RngCore + ?Sized>(rng: &mut R, weights: impl Iterator<Item = f64>) -> usize {
    let u = open_unit(rng);
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        if w > 0.0 {
            last = i;
        }
        acc += w;
        if u < acc {
            return i;
        }
    }
    last
}

fn route_duration<R: RngCore + ?Sized>(rng: &mut R, theta: &[f64], route: usize, scale: f64) -> f64 {
    theta[..=route]
        .iter()
        .map(|&th| exponential(rng, th * scale))
        .sum()
}

/// Which exact algorithm draws sojourns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMethod {
    /// Choose the exit phase first, then sum exponential sojourns up to it.
    #[default]
    Routes,
    /// Step the Markov chain phase by phase.
    EventStepping,
}

/// One absorption time from the mixture form.
pub fn sample_absorption<R: RngCore + ?Sized>(params: &MixtureParams, rng: &mut R) -> f64 {
    let route = categorical(rng, params.pi().iter().copied());
    route_duration(rng, params.theta(), route, 1.0)
}

/// One absorption time by stepping the rate-form chain.
pub fn sample_absorption_stepping<R: RngCore + ?Sized>(params: &CoxianParams, rng: &mut R) -> f64 {
    let mut t = 0.0;
    for k in 0..params.phases() {
        let theta = params.exit_rate(k);
        t += exponential(rng, theta);
        if open_unit(rng) * theta < params.mu()[k] {
            return t;
        }
    }
    t
}

/// `count` absorption times from a fresh generator seeded with `seed`.
pub fn sample_absorption_n(
    params: &MixtureParams,
    seed: u64,
    count: usize,
    method: SamplingMethod,
) -> Result<Vec<f64>> {
    let mut rng = rng_from_seed(seed);
    Ok(match method {
        SamplingMethod::Routes => (0..count).map(|_| sample_absorption(params, &mut rng)).collect(),
        SamplingMethod::EventStepping => {
            let rates = params.to_coxian()?;
            (0..count)
                .map(|_| sample_absorption_stepping(&rates, &mut rng))
                .collect()
        }
    })
}

/// One `(duration, exited)` draw; `exited` means absorbing state 1.
pub fn sample_two_exit<R: RngCore + ?Sized>(
    params: &MultiExitMixtureParams,
    rng: &mut R,
) -> (f64, bool) {
    sample_two_exit_scaled(params, 1.0, rng)
}

/// As [`sample_two_exit`] with every rate multiplied by `scale`.
pub fn sample_two_exit_scaled<R: RngCore + ?Sized>(
    params: &MultiExitMixtureParams,
    scale: f64,
    rng: &mut R,
) -> (f64, bool) {
    let n = params.phases();
    let outcome = categorical(rng, params.pi1().iter().chain(params.pi2()).copied());
    let (route, exited) = if outcome < n {
        (outcome, true)
    } else {
        (outcome - n, false)
    };
    (route_duration(rng, params.theta(), route, scale), exited)
}

pub fn sample_two_exit_stepping<R: RngCore + ?Sized>(rates: &TwoExitRates, rng: &mut R) -> (f64, bool) {
    let mut t = 0.0;
    for k in 0..rates.phases() {
        let theta = rates.exit_rate(k);
        t += exponential(rng, theta);
        let u = open_unit(rng) * theta;
        if u < rates.mu1[k] {
            return (t, true);
        }
        if u < rates.mu1[k] + rates.mu2[k] {
            return (t, false);
        }
    }
    // only reached through rounding in the last phase
    (t, rates.mu1[rates.phases() - 1] >= rates.mu2[rates.phases() - 1])
}

/// One patient's trajectory through a station chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedPath {
    /// Sojourn at each visited station.
    pub durations: Vec<f64>,
    /// One-based station the patient left the system from.
    pub exit_station: usize,
    /// Per visited station: left the system there.
    pub exits: Vec<bool>,
    pub covariates: Option<Vec<f64>>,
}

/// Walks the chain until the patient leaves. With covariates `x` and
/// per-station slopes `betas`, station m's rates become `theta * exp(-x . beta_m)`.
pub fn sample_chain<R: RngCore + ?Sized>(
    chain: &StationChain,
    betas: Option<&[Vec<f64>]>,
    x: Option<&[f64]>,
    rng: &mut R,
) -> Result<SimulatedPath> {
    if let Some(b) = betas {
        if b.len() != chain.len() {
            return Err(Error::InvalidChain(format!(
                "{} slope vectors for {} stations",
                b.len(),
                chain.len()
            )));
        }
        if let Some(x) = x {
            if let Some(bad) = b.iter().find(|beta| beta.len() != x.len()) {
                return Err(Error::InvalidParams(format!(
                    "slope vector of length {} for {} covariates",
                    bad.len(),
                    x.len()
                )));
            }
        }
    }
    let mut durations = Vec::with_capacity(chain.len());
    let mut exits = Vec::with_capacity(chain.len());
    for (m, station) in chain.stations().iter().enumerate() {
        let scale = match (betas, x) {
            (Some(b), Some(x)) => (-dot(x, &b[m])).exp(),
            _ => 1.0,
        };
        let (t, exited) = sample_two_exit_scaled(station, scale, rng);
        let last = m + 1 == chain.len();
        durations.push(t);
        exits.push(exited || last);
        if exited || last {
            break;
        }
    }
    Ok(SimulatedPath {
        exit_station: durations.len(),
        durations,
        exits,
        covariates: x.map(<[f64]>::to_vec),
    })
}

/// Draws covariates from `dist`, then walks the chain.
pub fn sample_chain_with<R: Rng + ?Sized>(
    chain: &StationChain,
    betas: Option<&[Vec<f64>]>,
    dist: &CovariateDistribution,
    rng: &mut R,
) -> Result<(CovariateEncoding, SimulatedPath)> {
    let enc = dist.draw(rng);
    let x = enc.to_vector();
    let path = sample_chain(chain, betas, Some(&x), rng)?;
    Ok((enc, path))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_mean() {
        let m = MixtureParams::new(vec![0.5], vec![1.0]).unwrap();
        let draws = sample_absorption_n(&m, 7, 100_000, SamplingMethod::Routes).unwrap();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((mean - 2.0).abs() < 3.0 * 2.0 / (1e5f64).sqrt());
        assert!(draws.iter().all(|&t| t > 0.0));
    }

    #[test]
    fn seeded_determinism() {
        let m = MixtureParams::new(vec![1.0, 0.3], vec![0.4, 0.6]).unwrap();
        let a = sample_absorption_n(&m, 42, 1000, SamplingMethod::Routes).unwrap();
        let b = sample_absorption_n(&m, 42, 1000, SamplingMethod::Routes).unwrap();
        assert_eq!(a, b);
        let c = sample_absorption_n(&m, 43, 1000, SamplingMethod::Routes).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn worker_streams_differ() {
        let a: u64 = worker_rng(5, 0).next_u64();
        let b: u64 = worker_rng(5, 1).next_u64();
        assert_ne!(a, b);
        assert_eq!(worker_rng(5, 0).next_u64(), rng_from_seed(5).next_u64());
    }

    #[test]
    fn all_mass_on_first_phase_exit1() {
        let p = MultiExitMixtureParams::new(vec![2.0, 1.0], vec![1.0, 0.0], vec![0.0, 0.0]).unwrap();
        let mut rng = rng_from_seed(1);
        let draws: Vec<(f64, bool)> = (0..20_000).map(|_| sample_two_exit(&p, &mut rng)).collect();
        assert!(draws.iter().all(|d| d.1));
        let mean = draws.iter().map(|d| d.0).sum::<f64>() / draws.len() as f64;
        assert!((mean - 0.5).abs() < 3.0 * 0.5 / (2e4f64).sqrt());
    }

    #[test]
    fn path_labels_consistent() {
        let s1 = MultiExitMixtureParams::new(vec![1.0], vec![0.3], vec![0.7]).unwrap();
        let s2 = MultiExitMixtureParams::new(vec![2.0], vec![1.0], vec![0.0]).unwrap();
        let chain = StationChain::new(vec![s1, s2]).unwrap();
        let mut rng = rng_from_seed(3);
        for _ in 0..1000 {
            let p = sample_chain(&chain, None, None, &mut rng).unwrap();
            assert_eq!(p.durations.len(), p.exit_station);
            assert_eq!(p.exits.len(), p.exit_station);
            assert!(p.exits[p.exit_station - 1]);
            assert!(p.exits[..p.exit_station - 1].iter().all(|e| !e));
        }
    }
}
