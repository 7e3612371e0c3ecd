use log::{debug, warn};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::data::FitData;
use crate::estimation::likelihood::{DensityForm, Layout, Objective};
use crate::estimation::stderr::{standard_errors, StdErrors};
use crate::hypoexp::{ExpSum, RouteTable};
use crate::optim::{minimize, NelderMeadConfig};
use crate::params::{MixtureParams, MultiExitMixtureParams};
use crate::sampler::{dot, worker_rng};

/// Covariate levels with fewer records than this trigger a warning.
pub const SPARSE_LEVEL_COUNT: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseRange {
    pub min: usize,
    pub max: usize,
}

impl Default for PhaseRange {
    fn default() -> Self {
        Self { min: 1, max: 7 }
    }
}

impl PhaseRange {
    pub fn new(min: usize, max: usize) -> Result<Self> {
        if min == 0 || max < min {
            return Err(Error::Config(format!("invalid phase range {min}..{max}")));
        }
        Ok(Self { min, max })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub n_starts: usize,
    /// Nelder-Mead iteration budget per start.
    pub max_iter: usize,
    /// Simplex collapse tolerance on the negative log-likelihood.
    pub rel_tol: f64,
    /// Starts within this relative distance of the best log-likelihood agree.
    pub agreement_tol: f64,
    pub seed: u64,
    pub phase_range: PhaseRange,
    pub density_form: DensityForm,
    /// Compute standard errors for every fit (failures become warnings).
    pub std_errors: bool,
    /// Stop a phase sweep after two consecutive rows worse than the best on
    /// both AIC and BIC.
    pub early_stop: bool,
    pub initial_step: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            n_starts: 20,
            max_iter: 2000,
            rel_tol: 1e-8,
            agreement_tol: 1e-6,
            seed: 0,
            phase_range: PhaseRange::default(),
            density_form: DensityForm::Mixture,
            std_errors: false,
            early_stop: true,
            initial_step: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelForm {
    Standard,
    TwoExit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateModel {
    pub names: Vec<String>,
    /// Rates are `theta0 * exp(-x . beta)`; positive slopes lengthen stays.
    pub beta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartSummary {
    pub index: usize,
    pub initial_loglik: f64,
    pub final_loglik: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model_form: ModelForm,
    pub phases: usize,
    /// Phase rates; the baseline `theta0` when covariates are present.
    pub theta: Vec<f64>,
    /// Absorption weights into exit 1 (all weights for a standard fit).
    pub pi: Vec<f64>,
    /// Absorption weights into exit 2.
    pub pi2: Option<Vec<f64>>,
    pub covariates: Option<CovariateModel>,
    /// Exact log-likelihood, including any conditioning constant.
    pub loglik: f64,
    pub aic: f64,
    pub bic: f64,
    pub n_params: usize,
    pub n_obs: usize,
    /// `sum log(f2_prev / f_prev)` over previous-station sojourns.
    pub conditioning_constant: Option<f64>,
    pub std_errors: Option<StdErrors>,
    pub converged: bool,
    pub n_starts: usize,
    pub n_starts_agreeing: usize,
    pub starts: Vec<StartSummary>,
    pub warnings: Vec<String>,
    /// Tied rates were perturbed before evaluation.
    pub jittered: bool,
    pub seed: u64,
    pub config: FitConfig,
}

impl FitResult {
    pub fn is_two_exit(&self) -> bool {
        self.pi2.is_some()
    }

    pub fn beta(&self) -> &[f64] {
        self.covariates.as_ref().map_or(&[], |c| c.beta.as_slice())
    }

    /// Marginal mixture over both exits at baseline covariates.
    pub fn mixture_params(&self) -> Result<MixtureParams> {
        let pi = match &self.pi2 {
            Some(p2) => self.pi.iter().zip(p2).map(|(a, b)| a + b).collect(),
            None => self.pi.clone(),
        };
        MixtureParams::new(self.theta.clone(), pi)
    }

    /// Two-exit parameters at baseline covariates; a standard fit has `pi2 = 0`.
    pub fn two_exit_params(&self) -> Result<MultiExitMixtureParams> {
        let pi2 = self.pi2.clone().unwrap_or_else(|| vec![0.0; self.phases]);
        MultiExitMixtureParams::new(self.theta.clone(), self.pi.clone(), pi2)
    }

    /// `exp(-x . beta)`, the rate multiplier for covariates `x`.
    pub fn rate_scale(&self, x: Option<&[f64]>) -> f64 {
        match (x, &self.covariates) {
            (Some(x), Some(c)) => (-dot(x, &c.beta)).exp(),
            _ => 1.0,
        }
    }

    pub fn rates_for(&self, x: Option<&[f64]>) -> Vec<f64> {
        let s = self.rate_scale(x);
        self.theta.iter().map(|t| t * s).collect()
    }

    /// Mean sojourn implied by the link at covariates `x`.
    pub fn mean_for(&self, x: Option<&[f64]>) -> Result<f64> {
        Ok(self.mixture_params()?.mean() / self.rate_scale(x))
    }

    pub fn evaluator(&self) -> Result<FittedDensity> {
        let table = RouteTable::new(&self.theta)?;
        let exit1 = table.combine(&self.pi);
        let exit2 = self.pi2.as_ref().map(|p| table.combine(p));
        Ok(FittedDensity {
            exit1,
            exit2,
            beta: self.beta().to_vec(),
        })
    }

    /// Flags a result whose log-likelihood picks up a conditioning constant.
    pub fn is_conditional(&self) -> bool {
        self.conditioning_constant.is_some()
    }

    /// Replaces any conditioning constant with `constant` and updates
    /// loglik, AIC and BIC.
    pub fn set_conditioning_constant(&mut self, constant: f64) {
        let base = self.loglik - self.conditioning_constant.unwrap_or(0.0);
        self.conditioning_constant = Some(constant);
        self.set_loglik(base + constant);
    }

    fn set_loglik(&mut self, loglik: f64) {
        self.loglik = loglik;
        self.aic = aic(loglik, self.n_params);
        self.bic = bic(loglik, self.n_params, self.n_obs);
    }
}

pub fn aic(loglik: f64, n_params: usize) -> f64 {
    2.0 * n_params as f64 - 2.0 * loglik
}

pub fn bic(loglik: f64, n_params: usize, n_obs: usize) -> f64 {
    n_params as f64 * (n_obs as f64).ln() - 2.0 * loglik
}

/// Sub-density evaluation for a fitted model at arbitrary covariates.
#[derive(Debug, Clone)]
pub struct FittedDensity {
    exit1: ExpSum,
    exit2: Option<ExpSum>,
    beta: Vec<f64>,
}

impl FittedDensity {
    fn log_scale(&self, x: Option<&[f64]>) -> f64 {
        match x {
            Some(x) if !self.beta.is_empty() => -dot(x, &self.beta),
            _ => 0.0,
        }
    }

    /// `(ln f1, ln f2)` at `t`; `ln f2 = -inf` without a second exit.
    pub fn ln_densities(&self, t: f64, x: Option<&[f64]>) -> (f64, f64) {
        let ln_s = self.log_scale(x);
        let tau = t * ln_s.exp();
        let a = ln_s + self.exit1.ln_density(tau);
        let b = self
            .exit2
            .as_ref()
            .map_or(f64::NEG_INFINITY, |e| ln_s + e.ln_density(tau));
        (a, b)
    }

    /// `ln(f2 / (f1 + f2))` at `t`.
    pub fn ln_proceed(&self, t: f64, x: Option<&[f64]>) -> f64 {
        let (a, b) = self.ln_densities(t, x);
        let top = a.max(b);
        if top == f64::NEG_INFINITY {
            return f64::NAN;
        }
        b - (top + ((a - top).exp() + (b - top).exp()).ln())
    }
}

fn layout_for(data: &FitData, phases: usize, covariates: bool) -> Layout {
    Layout {
        phases,
        two_exit: data.exits().is_some(),
        covariates: if covariates {
            data.covariates().map_or(0, |x| x.cols())
        } else {
            0
        },
    }
}

/// Random start: rates log-uniform on `[0.1, 10] / mean`, weights Dirichlet(1),
/// slopes zero.
fn random_start(layout: Layout, mean: f64, seed: u64, index: usize) -> Vec<f64> {
    let mut rng = worker_rng(seed, index as u64);
    let (lo, hi) = ((0.1 / mean).ln(), (10.0 / mean).ln());
    let theta: Vec<f64> = (0..layout.phases)
        .map(|_| (lo + rng.random::<f64>() * (hi - lo)).exp())
        .collect();
    let mut w: Vec<f64> = (0..layout.weight_count())
        .map(|_| -(1.0 - rng.random::<f64>()).ln().min(-1e-300))
        .collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    layout.pack(&theta, &w, &vec![0.0; layout.covariates])
}

struct Search {
    best: Vec<f64>,
    best_loglik: f64,
    starts: Vec<StartSummary>,
}

fn multistart(objective: &Objective<'_>, mean: f64, config: &FitConfig) -> Search {
    let layout = objective.layout();
    let nm = NelderMeadConfig {
        max_iter: config.max_iter,
        rel_tol: config.rel_tol,
        initial_step: config.initial_step,
        ..NelderMeadConfig::default()
    };
    let runs: Vec<(Vec<f64>, StartSummary)> = (0..config.n_starts.max(1))
        .into_par_iter()
        .map(|index| {
            let u0 = random_start(layout, mean, config.seed, index);
            let initial_loglik = objective.loglik(&u0);
            let out = minimize(|u| -objective.loglik(u), &u0, &nm);
            debug!(
                "start {index}: loglik {initial_loglik:.4} -> {:.4} in {} iterations",
                -out.value, out.iterations
            );
            let summary = StartSummary {
                index,
                initial_loglik,
                final_loglik: -out.value,
                iterations: out.iterations,
                evaluations: out.evaluations,
                converged: out.converged,
            };
            (out.x, summary)
        })
        .collect();
    let mut best = 0;
    for (i, (_, s)) in runs.iter().enumerate() {
        if s.final_loglik > runs[best].1.final_loglik {
            best = i;
        }
    }
    Search {
        best: runs[best].0.clone(),
        best_loglik: runs[best].1.final_loglik,
        starts: runs.into_iter().map(|(_, s)| s).collect(),
    }
}

/// Closed-form maximum likelihood for one phase without covariates.
fn exponential_mle(data: &FitData, layout: Layout) -> Vec<f64> {
    let theta = 1.0 / data.mean_duration();
    let weights = match data.exits() {
        Some(e) => {
            let p = e.iter().filter(|v| **v).count() as f64 / e.len() as f64;
            vec![p, 1.0 - p]
        }
        None => vec![1.0],
    };
    layout.pack(&[theta], &weights, &[])
}

fn fit_layout(data: &FitData, layout: Layout, config: &FitConfig) -> Result<FitResult> {
    let objective = Objective::new(data, layout, config.density_form);
    let mut search = multistart(&objective, data.mean_duration(), config);
    if layout.phases == 1 && layout.covariates == 0 {
        let u = exponential_mle(data, layout);
        let ll = objective.loglik(&u);
        if ll >= search.best_loglik {
            search.best = u;
            search.best_loglik = ll;
        }
    }
    if !search.best_loglik.is_finite() {
        return Err(Error::NumericRange(format!(
            "no start produced a finite log-likelihood for {} phases",
            layout.phases
        )));
    }
    let tol = config.agreement_tol * search.best_loglik.abs().max(1.0);
    let agreeing: Vec<&StartSummary> = search
        .starts
        .iter()
        .filter(|s| (s.final_loglik - search.best_loglik).abs() <= tol)
        .collect();
    let converged = agreeing.iter().any(|s| s.converged)
        || (layout.phases == 1 && layout.covariates == 0);
    let mut warnings = Vec::new();
    if !converged {
        warnings.push(format!(
            "no start converged within {} iterations",
            config.max_iter
        ));
    }
    if config.n_starts > 1 && agreeing.len() < 2 {
        warnings.push("only one start reached the best log-likelihood".into());
    }
    let p = layout.unpack(&search.best);
    let n = layout.phases;
    let jittered = RouteTable::new(&p.theta).map(|t| t.jittered())?;
    let covariates = (layout.covariates > 0).then(|| CovariateModel {
        names: data.covariates().map(|x| x.names().to_vec()).unwrap_or_default(),
        beta: p.beta.clone(),
    });
    let n_params = layout.dim();
    let mut result = FitResult {
        model_form: if layout.two_exit {
            ModelForm::TwoExit
        } else {
            ModelForm::Standard
        },
        phases: n,
        theta: p.theta.clone(),
        pi: p.pi1().to_vec(),
        pi2: p.pi2().map(<[f64]>::to_vec),
        covariates,
        loglik: 0.0,
        aic: 0.0,
        bic: 0.0,
        n_params,
        n_obs: data.len(),
        conditioning_constant: None,
        std_errors: None,
        converged,
        n_starts: search.starts.len(),
        n_starts_agreeing: agreeing.len(),
        starts: search.starts,
        warnings,
        jittered,
        seed: config.seed,
        config: config.clone(),
    };
    result.set_loglik(search.best_loglik);
    if config.std_errors {
        match standard_errors(&result, data) {
            Ok(se) => result.std_errors = Some(se),
            Err(e) => result.warnings.push(format!("standard errors unavailable: {e}")),
        }
    }
    for w in &result.warnings {
        warn!("{n}-phase fit: {w}");
    }
    Ok(result)
}

/// Single-exit fit of the durations (exit labels and covariates ignored).
pub fn fit_standard(data: &FitData, phases: usize, config: &FitConfig) -> Result<FitResult> {
    check_phases(phases)?;
    let plain = data.without_exits().without_covariates();
    fit_layout(&plain, layout_for(&plain, phases, false), config)
}

/// Two-exit fit. When every record has the same exit the model degenerates
/// to a standard fit with zero weights on the unused exit.
pub fn fit_two_exit(data: &FitData, phases: usize, config: &FitConfig) -> Result<FitResult> {
    check_phases(phases)?;
    let exits = data
        .exits()
        .ok_or_else(|| Error::InvalidParams("two-exit fit needs exit labels".into()))?;
    let covariates = data.covariates().is_some();
    if let Some(all) = uniform_exit(exits) {
        let mut result = fit_layout(
            &data.without_exits(),
            layout_for(&data.without_exits(), phases, covariates),
            config,
        )?;
        let zeros = vec![0.0; phases];
        let fitted = std::mem::replace(&mut result.pi, zeros.clone());
        if all {
            result.pi = fitted;
            result.pi2 = Some(zeros);
        } else {
            result.pi2 = Some(fitted);
        }
        if let Some(se) = result.std_errors.as_mut() {
            let unused = if all { "pi2" } else { "pi" };
            let used = std::mem::replace(&mut se.pi, vec![None; phases]);
            se.pi2 = Some(vec![None; phases]);
            if all {
                se.pi = used;
            } else {
                se.pi2 = Some(used);
                for name in se.fixed.iter_mut() {
                    *name = name.replacen("pi[", "pi2[", 1);
                }
            }
            se.fixed.extend((1..=phases).map(|k| format!("{unused}[{k}]")));
        }
        result.model_form = ModelForm::TwoExit;
        let which = if all { 1 } else { 2 };
        let msg = format!("all records take exit {which}; fitted as a single-exit model");
        warn!("{msg}");
        result.warnings.push(msg);
        return Ok(result);
    }
    fit_layout(data, layout_for(data, phases, covariates), config)
}

fn uniform_exit(exits: &[bool]) -> Option<bool> {
    let first = *exits.first()?;
    exits.iter().all(|e| *e == first).then_some(first)
}

/// Fit with the log-linear rate link; two-exit when exit labels are present.
pub fn fit_with_covariates(data: &FitData, phases: usize, config: &FitConfig) -> Result<FitResult> {
    check_phases(phases)?;
    let x = data
        .covariates()
        .ok_or_else(|| Error::InvalidParams("covariate fit needs a covariate matrix".into()))?;
    check_rank(x)?;
    let sparse = sparse_levels(x);
    let mut result = if data.exits().is_some() {
        fit_two_exit(data, phases, config)?
    } else {
        fit_layout(data, layout_for(data, phases, true), config)?
    };
    for msg in sparse {
        warn!("{msg}");
        result.warnings.push(msg);
    }
    Ok(result)
}

/// Fits whichever model the data supports: covariates if present, two exits
/// if labelled.
pub fn fit(data: &FitData, phases: usize, config: &FitConfig) -> Result<FitResult> {
    match (data.covariates().is_some(), data.exits().is_some()) {
        (true, _) => fit_with_covariates(data, phases, config),
        (false, true) => fit_two_exit(data, phases, config),
        (false, false) => fit_standard(data, phases, config),
    }
}

/// Fits the current station and adds the conditioning constant
/// `sum_i log(f2_prev(t_i) / f_prev(t_i))` computed from `prev_fit` over the
/// previous station's sojourns of the same patients (`prev`, row-aligned
/// with `current`).
pub fn fit_conditional(
    prev_fit: &FitResult,
    prev: &FitData,
    current: &FitData,
    phases: usize,
    config: &FitConfig,
) -> Result<FitResult> {
    if prev.len() != current.len() {
        return Err(Error::LengthMismatch {
            previous: prev.len(),
            current: current.len(),
        });
    }
    let constant = conditioning_constant(prev_fit, prev)?;
    let mut result = fit(current, phases, config)?;
    result.set_conditioning_constant(constant);
    if !prev_fit.converged {
        let msg = "previous-station fit did not converge".to_string();
        warn!("{msg}");
        result.warnings.push(msg);
    }
    Ok(result)
}

pub fn conditioning_constant(prev_fit: &FitResult, prev: &FitData) -> Result<f64> {
    if !prev_fit.is_two_exit() {
        return Err(Error::InvalidParams(
            "conditioning needs a two-exit previous-station fit".into(),
        ));
    }
    let eval = prev_fit.evaluator()?;
    let x = match (prev.covariates(), prev_fit.covariates.as_ref()) {
        (Some(x), Some(c)) if x.cols() == c.beta.len() => Some(x),
        (None, None) | (Some(_), None) => None,
        (x, Some(c)) => {
            return Err(Error::InvalidParams(format!(
                "previous fit has {} slopes but previous data has {} covariates",
                c.beta.len(),
                x.map_or(0, |x| x.cols())
            )))
        }
    };
    let mut total = 0.0;
    for (i, &t) in prev.t().iter().enumerate() {
        let v = eval.ln_proceed(t, x.map(|x| x.row(i)));
        if !v.is_finite() {
            return Err(Error::ZeroDensity { index: i, t });
        }
        total += v;
    }
    Ok(total)
}

fn check_phases(phases: usize) -> Result<()> {
    if phases == 0 {
        return Err(Error::InvalidParams("at least one phase is required".into()));
    }
    Ok(())
}

/// Rank test of `[1 | X]` through the eigenvalues of its Gram matrix.
pub fn check_rank(x: &crate::estimation::data::CovariateMatrix) -> Result<()> {
    let c = x.cols() + 1;
    let mut gram = DMatrix::<f64>::zeros(c, c);
    let mut row = vec![1.0; c];
    for i in 0..x.rows() {
        row[1..].copy_from_slice(x.row(i));
        for a in 0..c {
            for b in a..c {
                gram[(a, b)] += row[a] * row[b];
            }
        }
    }
    for a in 0..c {
        for b in 0..a {
            gram[(a, b)] = gram[(b, a)];
        }
    }
    let eig = SymmetricEigen::new(gram).eigenvalues;
    let top = eig.iter().copied().fold(0.0, f64::max);
    let rank = eig.iter().filter(|&&v| v > top * 1e-10).count();
    if rank < c {
        return Err(Error::RankDeficient { rank, columns: c });
    }
    Ok(())
}

/// Warnings for binary covariate levels observed fewer than
/// [`SPARSE_LEVEL_COUNT`] times.
fn sparse_levels(x: &crate::estimation::data::CovariateMatrix) -> Vec<String> {
    let mut out = Vec::new();
    for (j, name) in x.names().iter().enumerate() {
        let values: Vec<f64> = x.column(j).collect();
        if !values.iter().all(|v| *v == 0.0 || *v == 1.0) {
            continue;
        }
        let ones = values.iter().filter(|v| **v == 1.0).count();
        let zeros = values.len() - ones;
        for (level, count) in [(1, ones), (0, zeros)] {
            if count < SPARSE_LEVEL_COUNT {
                out.push(format!(
                    "covariate {name} = {level} has only {count} records; its slope is poorly identified"
                ));
            }
        }
    }
    out
}
