//! Fitting-time comparison of the matrix-exponential and mixture likelihoods.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::estimation::{fit, DensityForm, FitConfig, FitData, FitResult};
use crate::multi_exit::ExitRecord;
use crate::params::{MixtureParams, MultiExitMixtureParams};
use crate::sampler::{rng_from_seed, sample_absorption, sample_two_exit};

pub const DEFAULT_SIZES: [usize; 2] = [1_000, 5_000];
pub const BENCHMARK_PHASES: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    pub sizes: Vec<usize>,
    pub seed: u64,
    pub n_starts: usize,
    pub max_iter: usize,
    pub rel_tol: f64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            sizes: DEFAULT_SIZES.to_vec(),
            seed: 1,
            n_starts: 2,
            max_iter: 2000,
            rel_tol: 1e-10,
        }
    }
}

impl BenchmarkConfig {
    fn fit_config(&self, form: DensityForm) -> FitConfig {
        FitConfig {
            n_starts: self.n_starts,
            max_iter: self.max_iter,
            rel_tol: self.rel_tol,
            seed: self.seed,
            density_form: form,
            ..FitConfig::default()
        }
    }
}

/// Generator used for the one-exit data.
pub fn one_exit_truth() -> MixtureParams {
    MixtureParams::new(vec![2.0, 0.5, 0.1], vec![0.3, 0.3, 0.4]).expect("valid parameters")
}

/// Generator used for the two-exit data.
pub fn two_exit_truth() -> MultiExitMixtureParams {
    MultiExitMixtureParams::new(vec![2.0, 0.5, 0.1], vec![0.2, 0.1, 0.3], vec![0.1, 0.2, 0.1])
        .expect("valid parameters")
}

pub fn one_exit_data(size: usize, seed: u64) -> Result<FitData> {
    let truth = one_exit_truth();
    let mut rng = rng_from_seed(seed);
    FitData::durations((0..size).map(|_| sample_absorption(&truth, &mut rng)).collect())
}

pub fn two_exit_data(size: usize, seed: u64) -> Result<FitData> {
    let truth = two_exit_truth();
    let mut rng = rng_from_seed(seed);
    let records: Vec<ExitRecord> = (0..size)
        .map(|_| {
            let (t, e) = sample_two_exit(&truth, &mut rng);
            ExitRecord { t, exited: e }
        })
        .collect();
    FitData::two_exit(&records)
}

/// One fit timed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub seconds: f64,
    pub loglik: f64,
    pub evaluations: usize,
}

impl Timing {
    fn measure(data: &FitData, config: &FitConfig) -> Result<(Self, FitResult)> {
        let start = Instant::now();
        let result = fit(data, BENCHMARK_PHASES, config)?;
        let seconds = start.elapsed().as_secs_f64();
        let evaluations = result.starts.iter().map(|s| s.evaluations).sum();
        Ok((
            Self {
                seconds,
                loglik: result.loglik,
                evaluations,
            },
            result,
        ))
    }

    pub fn seconds_per_evaluation(&self) -> f64 {
        self.seconds / self.evaluations.max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub matrix: Timing,
    pub mixture: Timing,
}

impl Comparison {
    /// Matrix wall time over mixture wall time.
    pub fn relative_speed(&self) -> f64 {
        self.matrix.seconds / self.mixture.seconds
    }

    /// Same ratio per likelihood evaluation.
    pub fn relative_speed_per_evaluation(&self) -> f64 {
        self.matrix.seconds_per_evaluation() / self.mixture.seconds_per_evaluation()
    }

    /// `|ll_matrix - ll_mixture| / max(1, |ll_mixture|)`.
    pub fn loglik_gap(&self) -> f64 {
        (self.matrix.loglik - self.mixture.loglik).abs() / self.mixture.loglik.abs().max(1.0)
    }
}

pub fn compare(data: &FitData, config: &BenchmarkConfig) -> Result<Comparison> {
    let (mixture, _) = Timing::measure(data, &config.fit_config(DensityForm::Mixture))?;
    let (matrix, _) = Timing::measure(data, &config.fit_config(DensityForm::Matrix))?;
    Ok(Comparison { matrix, mixture })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub size: usize,
    pub one_exit: Comparison,
    pub two_exit: Comparison,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkTable {
    pub rows: Vec<BenchmarkRow>,
    pub config: BenchmarkConfig,
}

pub fn run_benchmark(config: &BenchmarkConfig) -> Result<BenchmarkTable> {
    let mut rows = Vec::with_capacity(config.sizes.len());
    for (i, &size) in config.sizes.iter().enumerate() {
        let seed = config.seed.wrapping_add(i as u64);
        let one = compare(&one_exit_data(size, seed)?, config)?;
        let two = compare(&two_exit_data(size, seed)?, config)?;
        log::info!(
            "{size} records: one exit x{:.1}, two exits x{:.1}",
            one.relative_speed(),
            two.relative_speed()
        );
        rows.push(BenchmarkRow {
            size,
            one_exit: one,
            two_exit: two,
        });
    }
    Ok(BenchmarkTable {
        rows,
        config: config.clone(),
    })
}

impl BenchmarkTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "size,one_exit_matrix_s,one_exit_mixture_s,one_exit_relative_speed,\
             two_exit_matrix_s,two_exit_mixture_s,two_exit_relative_speed,\
             one_exit_loglik_gap,two_exit_loglik_gap\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{:.4},{:.4},{:.1},{:.4},{:.4},{:.1},{:e},{:e}",
                r.size,
                r.one_exit.matrix.seconds,
                r.one_exit.mixture.seconds,
                r.one_exit.relative_speed(),
                r.two_exit.matrix.seconds,
                r.two_exit.mixture.seconds,
                r.two_exit.relative_speed(),
                r.one_exit.loglik_gap(),
                r.two_exit.loglik_gap()
            );
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "Fitting times in seconds of a {BENCHMARK_PHASES}-phase Coxian ({} starts, at most {} iterations each)",
            self.config.n_starts, self.config.max_iter
        );
        let _ = writeln!(
            s,
            "{:<12}| {:^36} | {:^36}",
            "", "One absorbing state", "Two absorbing states"
        );
        let _ = writeln!(
            s,
            "{:<12}| {:>11} {:>11} {:>12} | {:>11} {:>11} {:>12}",
            "Sample size", "Matrix", "Mixture", "Rel. speed", "Matrix", "Mixture", "Rel. speed"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<12}| {:>11.3} {:>11.3} {:>12.1} | {:>11.3} {:>11.3} {:>12.1}",
                format_size(r.size),
                r.one_exit.matrix.seconds,
                r.one_exit.mixture.seconds,
                r.one_exit.relative_speed(),
                r.two_exit.matrix.seconds,
                r.two_exit.mixture.seconds,
                r.two_exit.relative_speed()
            );
        }
        s
    }
}

fn format_size(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}
