use std::fs::File;
use std::io::Read;
use std::path::Path;

use chrono::{Duration, NaiveDate, NaiveDateTime, NaiveTime, Timelike};
use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 9] = [
    "patient_id",
    "registration_time",
    "arrival_mode",
    "age",
    "sex",
    "triage_time",
    "examination_time",
    "departure_time",
    "destination",
];

/// Ingestion fails outright above this fraction of rejected rows.
pub const MAX_REJECT_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrivalMode {
    Ambulance,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sex {
    F,
    M,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub patient_id: String,
    pub registration_time: NaiveDateTime,
    pub arrival_mode: ArrivalMode,
    pub age: f64,
    pub sex: Sex,
    pub triage_time: Option<NaiveDateTime>,
    pub examination_time: Option<NaiveDateTime>,
    pub departure_time: NaiveDateTime,
    pub destination: String,
    /// File line the record came from (the header is line 1).
    pub line: usize,
}

/// A row that could not be used, with the reason.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    pub line: usize,
    pub patient_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ingested {
    pub records: Vec<PatientRecord>,
    pub rejects: Vec<Reject>,
    pub warnings: Vec<String>,
}

impl Ingested {
    pub fn rows(&self) -> usize {
        self.records.len() + self.rejects.len()
    }
}

pub fn ingest(path: &Path) -> Result<Ingested> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    ingest_str(&text)
}

pub fn ingest_str(text: &str) -> Result<Ingested> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim_start_matches('\u{feff}').to_ascii_lowercase())
        .collect();
    if header != CSV_HEADER {
        return Err(Error::Ingest(format!(
            "header {:?} does not match the expected columns {}",
            header,
            CSV_HEADER.join(",")
        )));
    }
    let mut records = Vec::new();
    let mut rejects = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                rejects.push(Reject {
                    line,
                    patient_id: String::new(),
                    reason: format!("unreadable row: {e}"),
                });
                continue;
            }
        };
        let id = row.get(0).unwrap_or("").to_string();
        match parse_row(&row, line) {
            Ok(r) => records.push(r),
            Err(reason) => rejects.push(Reject {
                line,
                patient_id: id,
                reason,
            }),
        }
    }
    let mut warnings = Vec::new();
    let rows = records.len() + rejects.len();
    if rows == 0 {
        let msg = "input has a header but no records".to_string();
        warn!("{msg}");
        warnings.push(msg);
    } else if rejects.len() as f64 > MAX_REJECT_FRACTION * rows as f64 {
        let first = &rejects[0];
        return Err(Error::Ingest(format!(
            "{} of {rows} rows rejected (more than {:.0}%), suspected schema mismatch; first: line {}: {}",
            rejects.len(),
            MAX_REJECT_FRACTION * 100.0,
            first.line,
            first.reason
        )));
    }
    if !rejects.is_empty() {
        warn!("{} of {rows} rows rejected", rejects.len());
    }
    Ok(Ingested {
        records,
        rejects,
        warnings,
    })
}

fn parse_row(row: &csv::StringRecord, line: usize) -> std::result::Result<PatientRecord, String> {
    if row.len() != CSV_HEADER.len() {
        return Err(format!("expected {} fields, found {}", CSV_HEADER.len(), row.len()));
    }
    let field = |i: usize| row.get(i).unwrap_or("");
    let patient_id = field(0).to_string();
    if patient_id.is_empty() {
        return Err("missing patient_id".into());
    }
    let registration_time = match parse_datetime(field(1), None)? {
        Some(t) => t,
        None => return Err("missing registration_time".into()),
    };
    let arrival_mode = match field(2).to_ascii_lowercase().as_str() {
        "ambulance" => ArrivalMode::Ambulance,
        "other" => ArrivalMode::Other,
        v => return Err(format!("unknown arrival_mode {v:?}")),
    };
    let age: f64 = field(3)
        .parse()
        .map_err(|_| format!("unparseable age {:?}", field(3)))?;
    if !(0.0..130.0).contains(&age) {
        return Err(format!("age {age} out of range"));
    }
    let sex = match field(4).to_ascii_lowercase().as_str() {
        "f" | "female" => Sex::F,
        "m" | "male" => Sex::M,
        v => return Err(format!("unknown sex {v:?}")),
    };
    let triage_time = parse_datetime(field(5), Some(registration_time))?;
    let examination_time = parse_datetime(field(6), triage_time.or(Some(registration_time)))?;
    let last = examination_time.or(triage_time).unwrap_or(registration_time);
    let departure_time = match parse_datetime(field(7), Some(last))? {
        Some(t) => t,
        None => return Err("missing departure_time".into()),
    };
    let destination = field(8).to_string();
    if destination.is_empty() {
        return Err("missing destination".into());
    }
    let stamps: Vec<NaiveDateTime> = [Some(registration_time), triage_time, examination_time, Some(departure_time)]
        .into_iter()
        .flatten()
        .collect();
    if stamps.windows(2).any(|w| w[1] < w[0]) {
        return Err("non-monotone timestamps".into());
    }
    Ok(PatientRecord {
        patient_id,
        registration_time,
        arrival_mode,
        age,
        sex,
        triage_time,
        examination_time,
        departure_time,
        destination,
        line,
    })
}

const DATETIME_FORMATS: [&str; 4] = [
    "%Y-%m-%d %H:%M:%S%.f",
    "%Y-%m-%dT%H:%M:%S%.f",
    "%Y-%m-%d %H:%M",
    "%Y-%m-%dT%H:%M",
];
const TIME_FORMATS: [&str; 2] = ["%H:%M:%S%.f", "%H:%M"];

/// Parses a full timestamp, or a time of day placed on the date of `anchor`
/// (the next day if it would precede the anchor). Empty or `-` is missing.
pub fn parse_datetime(
    s: &str,
    anchor: Option<NaiveDateTime>,
) -> std::result::Result<Option<NaiveDateTime>, String> {
    let s = s.trim();
    if s.is_empty() || s == "-" {
        return Ok(None);
    }
    for f in DATETIME_FORMATS {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, f) {
            return Ok(Some(t));
        }
    }
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(Some(d.and_time(NaiveTime::MIN)));
    }
    for f in TIME_FORMATS {
        if let Ok(time) = NaiveTime::parse_from_str(s, f) {
            let Some(anchor) = anchor else {
                return Err(format!("time-only value {s:?} without a preceding date"));
            };
            let mut t = anchor.date().and_time(time);
            if t < anchor {
                t += Duration::days(1);
            }
            return Ok(Some(t));
        }
    }
    Err(format!("unparseable timestamp {s:?}"))
}

/// Minutes between two timestamps.
pub fn minutes_between(from: NaiveDateTime, to: NaiveDateTime) -> f64 {
    (to - from).num_milliseconds() as f64 / 60_000.0
}

impl PatientRecord {
    pub fn registration_hour(&self) -> u32 {
        self.registration_time.hour()
    }
}
