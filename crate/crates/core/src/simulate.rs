//! Synthetic emergency-department records in the ingestion CSV schema.

use std::fmt::Write as _;
use std::path::Path;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::covariates::{AgeGroup, CovariateDistribution, CovariateEncoding, COVARIATE_NAMES};
use crate::error::{Error, Result};
use crate::multi_exit::StationChain;
use crate::params::MultiExitMixtureParams;
use crate::pipeline::{DestinationMap, CSV_HEADER, STATION_COUNT};
use crate::sampler::{dot, rng_from_seed, sample_two_exit_scaled, SimRng};

const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M:%S%.3f";

/// One station of a chain spec. Rates are per minute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationSpec {
    pub theta: Vec<f64>,
    /// Probability of leaving the system from each phase.
    pub pi1: Vec<f64>,
    /// Probability of moving on to the next station from each phase; zeros
    /// when omitted.
    #[serde(default)]
    pub pi2: Vec<f64>,
    /// Covariate slopes in `COVARIATE_NAMES` order; zeros when omitted.
    #[serde(default)]
    pub beta: Vec<f64>,
}

impl StationSpec {
    fn params(&self) -> Result<MultiExitMixtureParams> {
        let pi2 = if self.pi2.is_empty() {
            vec![0.0; self.theta.len()]
        } else {
            self.pi2.clone()
        };
        MultiExitMixtureParams::new(self.theta.clone(), self.pi1.clone(), pi2)
    }

    fn beta(&self) -> Vec<f64> {
        if self.beta.is_empty() {
            vec![0.0; COVARIATE_NAMES.len()]
        } else {
            self.beta.clone()
        }
    }
}

/// Everything needed to synthesize a patient file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainSpec {
    pub stations: Vec<StationSpec>,
    pub covariates: CovariateDistribution,
    /// First registration date.
    pub start_date: NaiveDate,
    /// Registrations are spread uniformly over this many days.
    pub days: u32,
    /// Destination labels per exit station, drawn uniformly.
    pub destinations: Vec<Vec<String>>,
}

impl Default for ChainSpec {
    fn default() -> Self {
        let station = |theta: &[f64], pi1: &[f64], pi2: &[f64], beta: &[f64]| StationSpec {
            theta: theta.to_vec(),
            pi1: pi1.to_vec(),
            pi2: pi2.to_vec(),
            beta: beta.to_vec(),
        };
        Self {
            stations: vec![
                station(
                    &[0.5, 0.08],
                    &[0.002, 0.002],
                    &[0.598, 0.398],
                    &[-0.081, -0.312, 0.035, -0.0006, 0.027, 0.063],
                ),
                station(
                    &[0.05, 0.01],
                    &[0.03, 0.045],
                    &[0.57, 0.355],
                    &[0.277, -0.027, 0.065, -0.462, -0.047, -0.044],
                ),
                station(
                    &[0.02, 0.004],
                    &[0.6, 0.4],
                    &[],
                    &[-0.119, 0.512, 0.046, -0.235, 0.444, 0.875],
                ),
            ],
            covariates: CovariateDistribution::default(),
            start_date: NaiveDate::from_ymd_opt(2015, 1, 1).expect("valid date"),
            days: 365,
            destinations: vec![
                vec!["Left".into()],
                vec!["Did not wait".into()],
                vec![
                    "Discharged home".into(),
                    "Ward".into(),
                    "OPD".into(),
                    "AMU".into(),
                    "CDU".into(),
                ],
            ],
        }
    }
}

/// Validated chain spec ready for sampling.
#[derive(Debug, Clone)]
pub struct Simulator {
    spec: ChainSpec,
    chain: StationChain,
    betas: Vec<Vec<f64>>,
}

impl Simulator {
    /// Stations after the first one without an onward route are unreachable
    /// and dropped.
    pub fn new(spec: ChainSpec) -> Result<Self> {
        Self::with_map(spec, &DestinationMap::default())
    }

    pub fn with_map(spec: ChainSpec, map: &DestinationMap) -> Result<Self> {
        if spec.stations.is_empty() || spec.stations.len() > STATION_COUNT {
            return Err(Error::Config(format!(
                "a chain spec needs 1 to {STATION_COUNT} stations, found {}",
                spec.stations.len()
            )));
        }
        spec.covariates.validate()?;
        if spec.days == 0 {
            return Err(Error::Config("days must be at least 1".into()));
        }
        let mut params = Vec::new();
        let mut betas = Vec::new();
        for (m, s) in spec.stations.iter().enumerate() {
            let p = s.params()?;
            let beta = s.beta();
            if beta.len() != COVARIATE_NAMES.len() {
                return Err(Error::Config(format!(
                    "station {} has {} slopes, expected {}",
                    m + 1,
                    beta.len(),
                    COVARIATE_NAMES.len()
                )));
            }
            let onward = p.has_second_exit();
            params.push(p);
            betas.push(beta);
            if !onward {
                break;
            }
        }
        if let Some(last) = params.last() {
            if last.has_second_exit() {
                return Err(Error::Config(format!(
                    "station {} routes onward but is the last station",
                    params.len()
                )));
            }
        }
        for m in 0..params.len() {
            let labels = spec.destinations.get(m).filter(|l| !l.is_empty()).ok_or_else(|| {
                Error::Config(format!("no destination labels for exits from station {}", m + 1))
            })?;
            if let Some(bad) = labels.iter().find(|l| !map.allowed(l).contains(&(m + 1))) {
                return Err(Error::Config(format!(
                    "destination {bad:?} is not an exit from station {}",
                    m + 1
                )));
            }
        }
        let chain = StationChain::new(params).map_err(|e| Error::Config(e.to_string()))?;
        Ok(Self { spec, chain, betas })
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let spec: ChainSpec = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Self::new(spec)
    }

    pub fn chain(&self) -> &StationChain {
        &self.chain
    }

    pub fn spec(&self) -> &ChainSpec {
        &self.spec
    }

    /// `count` patients with exit stations drawn from the model.
    pub fn simulate(&self, count: usize, seed: u64) -> Vec<SimulatedPatient> {
        let mut rng = rng_from_seed(seed);
        let mut out: Vec<SimulatedPatient> = (0..count)
            .map(|_| self.patient(&mut rng, None))
            .collect();
        finish(&mut out);
        out
    }

    /// Exactly `counts[m]` patients leaving from station `m + 1`. Given the
    /// exit station, routes are drawn from the renormalized exit and proceed
    /// probabilities, which is the model conditioned on that exit.
    pub fn simulate_with_exits(&self, counts: &[usize], seed: u64) -> Result<Vec<SimulatedPatient>> {
        if counts.len() > self.chain.len() {
            return Err(Error::Config(format!(
                "exit counts for {} stations but the chain has {}",
                counts.len(),
                self.chain.len()
            )));
        }
        let mut rng = rng_from_seed(seed);
        let mut order: Vec<usize> = counts
            .iter()
            .enumerate()
            .flat_map(|(m, &c)| std::iter::repeat_n(m + 1, c))
            .collect();
        // interleave exit stations so the file is not sorted by outcome
        for i in (1..order.len()).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        let mut out = Vec::with_capacity(order.len());
        for exit in order {
            for m in 0..exit {
                let s = self.chain.station(m);
                let mass = if m + 1 == exit {
                    s.exit1_probability()
                } else {
                    s.exit2_probability()
                };
                if mass <= 0.0 {
                    return Err(Error::Config(format!(
                        "station {} can never be the exit station",
                        exit
                    )));
                }
            }
            out.push(self.patient(&mut rng, Some(exit)));
        }
        finish(&mut out);
        Ok(out)
    }

    fn patient(&self, rng: &mut SimRng, exit: Option<usize>) -> SimulatedPatient {
        let enc = self.spec.covariates.draw(rng);
        let x = enc.to_vector();
        let mut durations = Vec::with_capacity(self.chain.len());
        for (m, station) in self.chain.stations().iter().enumerate() {
            let scale = (-dot(&x, &self.betas[m])).exp();
            let (t, exited) = match exit {
                None => sample_two_exit_scaled(station, scale, rng),
                Some(e) => {
                    let leave = m + 1 == e;
                    let conditioned = condition_route(station, leave);
                    (sample_two_exit_scaled(&conditioned, scale, rng).0, leave)
                }
            };
            durations.push(t);
            if exited || m + 1 == self.chain.len() {
                break;
            }
        }
        let exit_station = durations.len();
        let day = rng.random_range(0..self.spec.days) as i64;
        // night is [20:00, 08:00), day is [08:00, 20:00)
        let second_of_window = rng.random_range(0..12 * 3600) as i64;
        let start = if enc.night { 20 * 3600 } else { 8 * 3600 };
        let registration = self.spec.start_date.and_hms_opt(0, 0, 0).expect("midnight")
            + Duration::days(day)
            + Duration::seconds(start + second_of_window);
        let (lo, hi) = enc.age_group.age_range();
        let age = rng.random_range(lo..=hi);
        let labels = &self.spec.destinations[exit_station - 1];
        let destination = labels[rng.random_range(0..labels.len())].clone();
        SimulatedPatient {
            patient_id: String::new(),
            registration,
            covariates: enc,
            age,
            durations_millis: durations.iter().map(|t| to_millis(*t)).collect(),
            destination,
        }
    }
}

fn condition_route(s: &MultiExitMixtureParams, leave: bool) -> MultiExitMixtureParams {
    let n = s.phases();
    let (src, mass) = if leave {
        (s.pi1(), s.exit1_probability())
    } else {
        (s.pi2(), s.exit2_probability())
    };
    let w: Vec<f64> = src.iter().map(|p| p / mass).collect();
    let zeros = vec![0.0; n];
    let (pi1, pi2) = if leave { (w, zeros) } else { (zeros, w) };
    MultiExitMixtureParams::new(s.theta().to_vec(), pi1, pi2).expect("renormalized routes are valid")
}

/// Minutes to whole milliseconds, at least one.
fn to_millis(minutes: f64) -> i64 {
    ((minutes * 60_000.0).round() as i64).max(1)
}

/// Sorts by registration and numbers the patients.
fn finish(patients: &mut [SimulatedPatient]) {
    patients.sort_by_key(|p| p.registration);
    for (i, p) in patients.iter_mut().enumerate() {
        p.patient_id = format!("{}", 100_001 + i);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedPatient {
    pub patient_id: String,
    pub registration: NaiveDateTime,
    pub covariates: CovariateEncoding,
    pub age: u32,
    /// Sojourn per visited station, whole milliseconds.
    pub durations_millis: Vec<i64>,
    pub destination: String,
}

impl SimulatedPatient {
    pub fn exit_station(&self) -> usize {
        self.durations_millis.len()
    }

    /// Station sojourns in minutes, as ingestion will measure them.
    pub fn durations_minutes(&self) -> Vec<f64> {
        self.durations_millis.iter().map(|s| *s as f64 / 60_000.0).collect()
    }

    pub fn age_group(&self) -> AgeGroup {
        AgeGroup::from_age(self.age as f64)
    }
}

/// CSV text in the ingestion schema.
pub fn to_csv(patients: &[SimulatedPatient]) -> String {
    let mut s = CSV_HEADER.join(",");
    s.push('\n');
    for p in patients {
        let mut stamps = vec![p.registration];
        for d in &p.durations_millis {
            let last = *stamps.last().expect("registration");
            stamps.push(last + Duration::milliseconds(*d));
        }
        let fmt = |t: &NaiveDateTime| t.format(TIMESTAMP_FORMAT).to_string();
        let departure = fmt(stamps.last().expect("departure"));
        let triage = if p.exit_station() >= 2 { fmt(&stamps[1]) } else { String::new() };
        let exam = if p.exit_station() >= 3 { fmt(&stamps[2]) } else { String::new() };
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            p.patient_id,
            fmt(&p.registration),
            if p.covariates.ambulance { "Ambulance" } else { "Other" },
            p.age,
            if p.covariates.female { "F" } else { "M" },
            triage,
            exam,
            departure,
            csv_field(&p.destination)
        );
    }
    s
}

fn csv_field(v: &str) -> String {
    if v.contains([',', '"', '\n']) {
        format!("\"{}\"", v.replace('"', "\"\""))
    } else {
        v.to_string()
    }
}
