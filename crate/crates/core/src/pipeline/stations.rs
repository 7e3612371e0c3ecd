use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::covariates::{AgeGroup, CovariateEncoding, COVARIATE_NAMES};
use crate::error::{Error, Result};
use crate::estimation::{CovariateMatrix, FitData};
use crate::pipeline::ingest::{minutes_between, ArrivalMode, PatientRecord, Reject, Sex};

pub const STATION_COUNT: usize = 3;
pub const STATION_NAMES: [&str; STATION_COUNT] = ["Registration", "Triage", "Treatment"];
pub const DEFAULT_ZERO_SHIFT_MINUTES: f64 = 0.5;

/// Destination label to the stations a patient with that label may leave from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DestinationMap {
    pub labels: BTreeMap<String, Vec<usize>>,
    /// Stations allowed for labels not in the table.
    pub default_stations: Vec<usize>,
}

impl Default for DestinationMap {
    fn default() -> Self {
        let mut labels = BTreeMap::new();
        for l in ["left", "did not wait", "left without being seen"] {
            labels.insert(l.to_string(), vec![1, 2, 3]);
        }
        for l in ["amu", "cdu"] {
            labels.insert(l.to_string(), vec![2, 3]);
        }
        for l in ["home", "discharged home", "ward", "opd", "outpatient department", "death", "died"] {
            labels.insert(l.to_string(), vec![3]);
        }
        Self {
            labels,
            default_stations: vec![2, 3],
        }
    }
}

fn normalize(label: &str) -> String {
    label
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

impl DestinationMap {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let map: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        map.validate()?;
        Ok(map)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |s: &Vec<usize>| !s.is_empty() && s.iter().all(|m| (1..=STATION_COUNT).contains(m));
        if !ok(&self.default_stations) {
            return Err(Error::Config("default_stations must list stations 1-3".into()));
        }
        if let Some((l, _)) = self.labels.iter().find(|(_, s)| !ok(s)) {
            return Err(Error::Config(format!("label {l:?} must list stations 1-3")));
        }
        Ok(())
    }

    /// Exact match on the normalized label, else the longest table key
    /// contained in it, else the default.
    pub fn allowed(&self, label: &str) -> &[usize] {
        let norm = normalize(label);
        let table: BTreeMap<String, &Vec<usize>> =
            self.labels.iter().map(|(k, v)| (normalize(k), v)).collect();
        if let Some(s) = table.get(&norm) {
            return s;
        }
        table
            .iter()
            .filter(|(k, _)| norm.contains(k.as_str()))
            .max_by_key(|(k, _)| k.len())
            .map_or(&self.default_stations, |(_, s)| s)
    }
}

/// Observations at one station, in patient order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StationSample {
    /// Sojourn in minutes.
    pub t: Vec<f64>,
    /// Left the system from this station.
    pub exited: Vec<bool>,
    pub covariates: Vec<[f64; 6]>,
    pub patients: Vec<String>,
    /// Previous-station sojourn of the same patient (stations 2 and 3).
    pub prev_t: Option<Vec<f64>>,
}

impl StationSample {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn exit_count(&self) -> usize {
        self.exited.iter().filter(|e| **e).count()
    }

    fn push(&mut self, t: f64, exited: bool, x: [f64; 6], id: &str, prev: Option<f64>) {
        self.t.push(t);
        self.exited.push(exited);
        self.covariates.push(x);
        self.patients.push(id.to_string());
        if let Some(p) = prev {
            self.prev_t.get_or_insert_with(Vec::new).push(p);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationDataset {
    pub stations: Vec<StationSample>,
    pub rejects: Vec<Reject>,
    pub records_in: usize,
    /// Durations of zero minutes moved up to the shift value.
    pub shifted_zero: usize,
    pub zero_shift_minutes: f64,
}

impl StationDataset {
    /// Patients leaving the system from each station.
    pub fn exit_counts(&self) -> [usize; STATION_COUNT] {
        let mut out = [0; STATION_COUNT];
        for (m, s) in self.stations.iter().enumerate() {
            out[m] = s.exit_count();
        }
        out
    }

    pub fn patients(&self) -> usize {
        self.stations[0].len()
    }

    fn covariate_matrix(sample: &StationSample) -> Result<CovariateMatrix> {
        let names = COVARIATE_NAMES.iter().map(|s| s.to_string()).collect();
        CovariateMatrix::from_rows(names, &sample.covariates)
    }

    /// Fit data for station `m` (zero-based). The final station has a single exit.
    pub fn fit_data(&self, m: usize, covariates: bool) -> Result<FitData> {
        let s = self.station(m)?;
        if s.is_empty() {
            return Err(Error::EmptyData(format!("station {} has no records", m + 1)));
        }
        let exits = (m + 1 < STATION_COUNT).then(|| s.exited.clone());
        let x = if covariates {
            Some(Self::covariate_matrix(s)?)
        } else {
            None
        };
        FitData::new(s.t.clone(), exits, x)
    }

    /// Previous-station sojourns of the patients at station `m`, row-aligned
    /// with [`StationDataset::fit_data`] for `m`.
    pub fn previous_fit_data(&self, m: usize, covariates: bool) -> Result<FitData> {
        let s = self.station(m)?;
        let prev = s
            .prev_t
            .clone()
            .ok_or_else(|| Error::InvalidParams(format!("station {} has no previous station", m + 1)))?;
        let x = if covariates {
            Some(Self::covariate_matrix(s)?)
        } else {
            None
        };
        let n = prev.len();
        FitData::new(prev, Some(vec![false; n]), x)
    }

    fn station(&self, m: usize) -> Result<&StationSample> {
        self.stations.get(m).ok_or(Error::StationOutOfRange {
            index: m + 1,
            len: self.stations.len(),
        })
    }
}

pub fn encode(record: &PatientRecord) -> CovariateEncoding {
    CovariateEncoding {
        night: CovariateEncoding::is_night_hour(record.registration_hour()),
        ambulance: record.arrival_mode == ArrivalMode::Ambulance,
        female: record.sex == Sex::F,
        age_group: AgeGroup::from_age(record.age),
    }
}

/// Exit station (one-based) and per-station durations in minutes.
pub fn classify(record: &PatientRecord, map: &DestinationMap) -> std::result::Result<(usize, Vec<f64>), String> {
    let reg = record.registration_time;
    let dep = record.departure_time;
    let (station, durations) = match (record.triage_time, record.examination_time) {
        (None, Some(_)) => return Err("examination time without triage time".into()),
        (None, None) => (1, vec![minutes_between(reg, dep)]),
        (Some(tr), None) => (2, vec![minutes_between(reg, tr), minutes_between(tr, dep)]),
        (Some(tr), Some(ex)) => (
            3,
            vec![
                minutes_between(reg, tr),
                minutes_between(tr, ex),
                minutes_between(ex, dep),
            ],
        ),
    };
    let allowed = map.allowed(&record.destination);
    if !allowed.contains(&station) {
        return Err(format!(
            "destination {:?} is not an exit from station {station} (missing-field pattern contradicts destination)",
            record.destination
        ));
    }
    if durations.iter().any(|d| *d < 0.0) {
        return Err("non-monotone timestamps".into());
    }
    Ok((station, durations))
}

pub fn derive_stations(records: &[PatientRecord], map: &DestinationMap) -> StationDataset {
    derive_stations_with(records, map, DEFAULT_ZERO_SHIFT_MINUTES)
}

pub fn derive_stations_with(records: &[PatientRecord], map: &DestinationMap, zero_shift: f64) -> StationDataset {
    let mut stations = vec![StationSample::default(); STATION_COUNT];
    let mut rejects = Vec::new();
    let mut shifted_zero = 0;
    for r in records {
        let (exit_station, mut durations) = match classify(r, map) {
            Ok(v) => v,
            Err(reason) => {
                rejects.push(Reject {
                    line: r.line,
                    patient_id: r.patient_id.clone(),
                    reason,
                });
                continue;
            }
        };
        for d in durations.iter_mut().filter(|d| **d == 0.0) {
            *d = zero_shift;
            shifted_zero += 1;
        }
        let x = encode(r).to_vector();
        for (m, &t) in durations.iter().enumerate() {
            let prev = (m > 0).then(|| durations[m - 1]);
            stations[m].push(t, m + 1 == exit_station, x, &r.patient_id, prev);
        }
    }
    StationDataset {
        stations,
        rejects,
        records_in: records.len(),
        shifted_zero,
        zero_shift_minutes: zero_shift,
    }
}
