use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::covariates::COVARIATE_NAMES;
use crate::error::{Error, Result};
use crate::estimation::{
    check_rank, conditioning_constant, phase_sweep, CovariateMatrix, FitConfig, FitData, FitResult,
    SweepTable,
};
use crate::pipeline::ingest::Reject;
use crate::pipeline::stations::{StationDataset, STATION_COUNT, STATION_NAMES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkflowConfig {
    pub fit: FitConfig,
    /// Run the covariate sweep next to the null sweep.
    pub covariates: bool,
    pub histogram_bins: usize,
    /// Histograms span `[0, quantile]` of each station's durations.
    pub histogram_quantile: f64,
}

impl Default for WorkflowConfig {
    fn default() -> Self {
        Self {
            fit: FitConfig {
                std_errors: true,
                ..FitConfig::default()
            },
            covariates: true,
            histogram_bins: 40,
            histogram_quantile: 0.99,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", content = "reason", rename_all = "snake_case")]
pub enum StationStatus {
    Fitted,
    Failed(String),
    /// An upstream station failed.
    Blocked(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationOutcome {
    /// One-based station number.
    pub station: usize,
    pub name: String,
    pub records: usize,
    pub exits: usize,
    pub null_sweep: Option<SweepTable>,
    pub covariate_sweep: Option<SweepTable>,
    /// BIC-best fit: from the covariate sweep when it ran, else the null sweep.
    pub selected: Option<FitResult>,
    pub status: StationStatus,
    pub dropped_covariates: Vec<String>,
    pub warnings: Vec<String>,
}

impl StationOutcome {
    pub fn null_selected(&self) -> Option<&FitResult> {
        self.null_sweep.as_ref().and_then(SweepTable::bic_selected)
    }

    pub fn covariate_selected(&self) -> Option<&FitResult> {
        self.covariate_sweep.as_ref().and_then(SweepTable::bic_selected)
    }
}

/// Histogram of one exit stream against the fitted sub-density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub station: usize,
    /// `exit` (leave the system) or `proceed` (to the next station).
    pub stream: String,
    pub bin: usize,
    pub lower: f64,
    pub upper: f64,
    pub observed_density: f64,
    pub fitted_density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkflowOutput {
    pub stations: Vec<StationOutcome>,
    pub plot: Vec<PlotRow>,
    pub records_in: usize,
    pub exit_counts: [usize; STATION_COUNT],
    pub rejects: Vec<Reject>,
    pub shifted_zero: usize,
    pub zero_shift_minutes: f64,
    /// Share of patients with each covariate equal to 1.
    pub covariate_prevalence: Vec<(String, f64)>,
    pub config: WorkflowConfig,
}

impl WorkflowOutput {
    pub fn failed(&self) -> bool {
        self.stations.iter().any(|s| s.status != StationStatus::Fitted)
    }
}

fn prevalence(ds: &StationDataset) -> Vec<(String, f64)> {
    let s = &ds.stations[0];
    let n = s.len().max(1) as f64;
    COVARIATE_NAMES
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let ones = s.covariates.iter().filter(|x| x[j] == 1.0).count();
            (name.to_string(), ones as f64 / n)
        })
        .collect()
}

/// Columns of `x` that vary, plus warnings for those dropped.
fn varying_columns(x: &CovariateMatrix, station: usize) -> (Vec<usize>, Vec<String>) {
    let constant = x.constant_columns();
    let keep = (0..x.cols()).filter(|j| !constant.contains(j)).collect();
    let dropped = constant.iter().map(|&j| x.names()[j].clone()).collect::<Vec<_>>();
    for name in &dropped {
        warn!("station {station}: covariate {name} is constant and is left out of the covariate model");
    }
    (keep, dropped)
}

fn select_by_name(x: &CovariateMatrix, names: &[String]) -> Result<CovariateMatrix> {
    let idx = names
        .iter()
        .map(|n| {
            x.names()
                .iter()
                .position(|m| m == n)
                .ok_or_else(|| Error::InvalidParams(format!("unknown covariate {n}")))
        })
        .collect::<Result<Vec<_>>>()?;
    x.select(&idx)
}

/// Adds the conditioning constant of `prev_fit` over the previous-station
/// sojourns to every row of `sweep`.
fn condition_sweep(sweep: &mut SweepTable, prev_fit: &FitResult, prev: &FitData) -> Result<f64> {
    let prev = match (prev.covariates(), &prev_fit.covariates) {
        (Some(x), Some(model)) => {
            FitData::new(prev.t().to_vec(), prev.exits().map(<[bool]>::to_vec), Some(select_by_name(x, &model.names)?))?
        }
        _ => prev.without_covariates(),
    };
    let constant = conditioning_constant(prev_fit, &prev)?;
    for row in &mut sweep.rows {
        if let Some(fit) = row.fit.as_mut() {
            fit.set_conditioning_constant(constant);
        }
    }
    Ok(constant)
}

/// Sweeps every station with and without covariates, selects by BIC, and
/// chains the conditional likelihoods S1 -> S2 -> S3.
pub fn run_workflow(ds: &StationDataset, config: &WorkflowConfig) -> WorkflowOutput {
    let mut outcomes: Vec<StationOutcome> = Vec::with_capacity(STATION_COUNT);
    for m in 0..STATION_COUNT {
        let sample = &ds.stations[m];
        let mut outcome = StationOutcome {
            station: m + 1,
            name: STATION_NAMES[m].to_string(),
            records: sample.len(),
            exits: sample.exit_count(),
            null_sweep: None,
            covariate_sweep: None,
            selected: None,
            status: StationStatus::Fitted,
            dropped_covariates: Vec::new(),
            warnings: Vec::new(),
        };
        if let Some(up) = outcomes.last().filter(|o| o.status != StationStatus::Fitted) {
            let reason = format!("station {} was not fitted", up.station);
            warn!("station {}: blocked, {reason}", m + 1);
            outcome.status = StationStatus::Blocked(reason);
            outcomes.push(outcome);
            continue;
        }
        let prev = outcomes.last();
        match fit_station(ds, m, prev, config, &mut outcome) {
            Ok(()) => info!("station {} fitted", m + 1),
            Err(e) => {
                warn!("station {}: {e}", m + 1);
                outcome.status = StationStatus::Failed(e.to_string());
            }
        }
        outcomes.push(outcome);
    }
    let plot = outcomes
        .iter()
        .filter_map(|o| {
            let fit = o.selected.as_ref()?;
            Some(plot_rows(ds, o.station - 1, fit, config))
        })
        .flatten()
        .collect();
    WorkflowOutput {
        stations: outcomes,
        plot,
        records_in: ds.records_in,
        exit_counts: ds.exit_counts(),
        rejects: ds.rejects.clone(),
        shifted_zero: ds.shifted_zero,
        zero_shift_minutes: ds.zero_shift_minutes,
        covariate_prevalence: prevalence(ds),
        config: config.clone(),
    }
}

fn fit_station(
    ds: &StationDataset,
    m: usize,
    prev: Option<&StationOutcome>,
    config: &WorkflowConfig,
    outcome: &mut StationOutcome,
) -> Result<()> {
    let null_data = ds.fit_data(m, false)?;
    let mut null_sweep = phase_sweep(&null_data, &config.fit);
    if let (Some(p), true) = (prev.and_then(StationOutcome::null_selected), m > 0) {
        condition_sweep(&mut null_sweep, p, &ds.previous_fit_data(m, false)?)?;
    }
    outcome.null_sweep = Some(null_sweep);

    if config.covariates {
        match covariate_data(ds, m, outcome) {
            Ok(Some(data)) => {
                let mut sweep = phase_sweep(&data, &config.fit);
                if m > 0 {
                    let prev_fit = prev.and_then(|p| p.covariate_selected().or(p.null_selected()));
                    if let Some(p) = prev_fit {
                        condition_sweep(&mut sweep, p, &ds.previous_fit_data(m, true)?)?;
                    }
                }
                outcome.covariate_sweep = Some(sweep);
            }
            Ok(None) => {}
            Err(e) => {
                let msg = format!("covariate model skipped: {e}");
                warn!("station {}: {msg}", m + 1);
                outcome.warnings.push(msg);
            }
        }
    }
    let selected = outcome
        .covariate_selected()
        .or(outcome.null_selected())
        .cloned()
        .ok_or_else(|| Error::NumericRange("no phase count could be fitted".into()))?;
    outcome.selected = Some(selected);
    Ok(())
}

fn covariate_data(ds: &StationDataset, m: usize, outcome: &mut StationOutcome) -> Result<Option<FitData>> {
    let full = ds.fit_data(m, true)?;
    let x = full.covariates().expect("requested covariates");
    let (keep, dropped) = varying_columns(x, m + 1);
    for name in &dropped {
        outcome
            .warnings
            .push(format!("covariate {name} is constant at this station and was left out"));
    }
    outcome.dropped_covariates = dropped;
    if keep.is_empty() {
        outcome.warnings.push("no covariate varies; covariate model skipped".into());
        return Ok(None);
    }
    let x = x.select(&keep)?;
    check_rank(&x)?;
    Ok(Some(FitData::new(
        full.t().to_vec(),
        full.exits().map(<[bool]>::to_vec),
        Some(x),
    )?))
}

fn plot_rows(ds: &StationDataset, m: usize, fit: &FitResult, config: &WorkflowConfig) -> Vec<PlotRow> {
    let sample = &ds.stations[m];
    if sample.is_empty() || config.histogram_bins == 0 {
        return Vec::new();
    }
    let Ok(eval) = fit.evaluator() else {
        return Vec::new();
    };
    let mut sorted = sample.t.clone();
    sorted.sort_by(f64::total_cmp);
    let q = config.histogram_quantile.clamp(0.0, 1.0);
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    let upper = sorted[idx].max(f64::MIN_POSITIVE);
    let bins = config.histogram_bins;
    let width = upper / bins as f64;
    let n = sample.len() as f64;

    // fitted sub-density averaged over the observed covariate patterns
    let names = fit.covariates.as_ref().map(|c| c.names.clone()).unwrap_or_default();
    let cols: Vec<usize> = names
        .iter()
        .filter_map(|name| COVARIATE_NAMES.iter().position(|c| c == name))
        .collect();
    let mut patterns: Vec<(Vec<f64>, usize)> = Vec::new();
    for x in &sample.covariates {
        let key: Vec<f64> = cols.iter().map(|&j| x[j]).collect();
        match patterns.iter_mut().find(|(p, _)| *p == key) {
            Some((_, c)) => *c += 1,
            None => patterns.push((key, 1)),
        }
    }
    let last = m + 1 == STATION_COUNT;
    let streams: &[(&str, bool)] = if last {
        &[("exit", true)]
    } else {
        &[("exit", true), ("proceed", false)]
    };
    let mut rows = Vec::new();
    for &(stream, exit1) in streams {
        let mut counts = vec![0usize; bins];
        for (&t, &e) in sample.t.iter().zip(&sample.exited) {
            if (e || last) == exit1 && t <= upper {
                let b = ((t / width) as usize).min(bins - 1);
                counts[b] += 1;
            }
        }
        for (b, &c) in counts.iter().enumerate() {
            let lower = b as f64 * width;
            let mid = lower + 0.5 * width;
            let fitted: f64 = patterns
                .iter()
                .map(|(x, count)| {
                    let x = (!cols.is_empty()).then_some(x.as_slice());
                    let (a, p) = eval.ln_densities(mid, x);
                    let ln = if exit1 { a } else { p };
                    ln.exp() * *count as f64 / n
                })
                .sum();
            rows.push(PlotRow {
                station: m + 1,
                stream: stream.to_string(),
                bin: b + 1,
                lower,
                upper: lower + width,
                observed_density: c as f64 / (n * width),
                fitted_density: fitted,
            });
        }
    }
    rows
}
