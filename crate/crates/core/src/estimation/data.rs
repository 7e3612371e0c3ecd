use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multi_exit::ExitRecord;

/// Row-major covariate matrix with named columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateMatrix {
    names: Vec<String>,
    values: Vec<f64>,
}

impl CovariateMatrix {
    pub fn new(names: Vec<String>, values: Vec<f64>) -> Result<Self> {
        let cols = names.len();
        if cols == 0 {
            return Err(Error::InvalidParams("covariate matrix has no columns".into()));
        }
        if !values.len().is_multiple_of(cols) {
            return Err(Error::InvalidParams(format!(
                "{} covariate values do not fill rows of {cols}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("covariates must be finite".into()));
        }
        Ok(Self { names, values })
    }

    pub fn from_rows<R: AsRef<[f64]>>(names: Vec<String>, rows: &[R]) -> Result<Self> {
        let cols = names.len();
        let mut values = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::InvalidParams(format!(
                    "covariate row {i} has {} values, expected {cols}",
                    r.len()
                )));
            }
            values.extend_from_slice(r);
        }
        Self::new(names, values)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn cols(&self) -> usize {
        self.names.len()
    }

    pub fn rows(&self) -> usize {
        self.values.len() / self.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.values[i * c..(i + 1) * c]
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.rows()).map(move |i| self.values[i * self.cols() + j])
    }

    /// Keeps only the listed columns.
    pub fn select(&self, keep: &[usize]) -> Result<Self> {
        let names = keep.iter().map(|&j| self.names[j].clone()).collect();
        let mut values = Vec::with_capacity(self.rows() * keep.len());
        for i in 0..self.rows() {
            let row = self.row(i);
            values.extend(keep.iter().map(|&j| row[j]));
        }
        Self::new(names, values)
    }

    /// Indices of columns that take a single value.
    pub fn constant_columns(&self) -> Vec<usize> {
        (0..self.cols())
            .filter(|&j| {
                let mut it = self.column(j);
                match it.next() {
                    Some(first) => it.all(|v| v == first),
                    None => true,
                }
            })
            .collect()
    }

    /// Rows restricted to an index subset.
    pub fn subset(&self, rows: &[usize]) -> Self {
        let mut values = Vec::with_capacity(rows.len() * self.cols());
        for &i in rows {
            values.extend_from_slice(self.row(i));
        }
        Self {
            names: self.names.clone(),
            values,
        }
    }
}

/// Observations at one station: durations, optional exit indicators
/// (`true` = left the system) and optional covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitData {
    t: Vec<f64>,
    exits: Option<Vec<bool>>,
    covariates: Option<CovariateMatrix>,
}

impl FitData {
    /// Single absorbing state.
    pub fn durations(t: Vec<f64>) -> Result<Self> {
        check_durations(&t)?;
        Ok(Self {
            t,
            exits: None,
            covariates: None,
        })
    }

    /// Two absorbing states.
    pub fn two_exit(records: &[ExitRecord]) -> Result<Self> {
        let t: Vec<f64> = records.iter().map(|r| r.t).collect();
        check_durations(&t)?;
        Ok(Self {
            t,
            exits: Some(records.iter().map(|r| r.exited).collect()),
            covariates: None,
        })
    }

    pub fn new(t: Vec<f64>, exits: Option<Vec<bool>>, covariates: Option<CovariateMatrix>) -> Result<Self> {
        check_durations(&t)?;
        if let Some(e) = &exits {
            if e.len() != t.len() {
                return Err(Error::InvalidParams(format!(
                    "{} exit labels for {} durations",
                    e.len(),
                    t.len()
                )));
            }
        }
        if let Some(x) = &covariates {
            if x.rows() != t.len() {
                return Err(Error::InvalidParams(format!(
                    "{} covariate rows for {} durations",
                    x.rows(),
                    t.len()
                )));
            }
        }
        Ok(Self { t, exits, covariates })
    }

    pub fn with_covariates(mut self, x: CovariateMatrix) -> Result<Self> {
        if x.rows() != self.t.len() {
            return Err(Error::InvalidParams(format!(
                "{} covariate rows for {} durations",
                x.rows(),
                self.t.len()
            )));
        }
        self.covariates = Some(x);
        Ok(self)
    }

    pub fn without_covariates(&self) -> Self {
        Self {
            t: self.t.clone(),
            exits: self.exits.clone(),
            covariates: None,
        }
    }

    /// Same observations treated as single-exit.
    pub fn without_exits(&self) -> Self {
        Self {
            t: self.t.clone(),
            exits: None,
            covariates: self.covariates.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }

    pub fn exits(&self) -> Option<&[bool]> {
        self.exits.as_deref()
    }

    pub fn covariates(&self) -> Option<&CovariateMatrix> {
        self.covariates.as_ref()
    }

    pub fn mean_duration(&self) -> f64 {
        self.t.iter().sum::<f64>() / self.t.len() as f64
    }

    /// Durations multiplied by `c` (a change of time unit).
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            t: self.t.iter().map(|t| t * c).collect(),
            exits: self.exits.clone(),
            covariates: self.covariates.clone(),
        }
    }
}

fn check_durations(t: &[f64]) -> Result<()> {
    if t.is_empty() {
        return Err(Error::EmptyData("no durations".into()));
    }
    if let Some((i, v)) = t.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::InvalidParams(format!(
            "duration {i} = {v}: fitting requires strictly positive times"
        )));
    }
    Ok(())
}
