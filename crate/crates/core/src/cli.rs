//! Command-line interface: `fit`, `simulate`, `benchmark` and `report`.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{error, info, warn};

use crate::benchmark::{run_benchmark, BenchmarkConfig};
use crate::error::{Error, Result};
use crate::estimation::{FitConfig, PhaseRange};
use crate::pipeline::{
    derive_stations, ingest, render, run_workflow, write_atomic, DestinationMap, WorkflowConfig, WorkflowOutput,
};
use crate::simulate::{to_csv, ChainSpec, Simulator};

/// Exit status when the run finished but a station could not be fitted.
pub const EXIT_STATION_FAILED: i32 = 1;
/// Exit status for command-line usage errors.
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "coxian", version, about = "Coxian phase-type models of patient flow")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit every station of a patient CSV and write the report bundle.
    Fit(FitArgs),
    /// Write a synthetic patient CSV from a chain spec.
    Simulate(SimulateArgs),
    /// Time matrix-form against mixture-form fitting.
    Benchmark(BenchmarkArgs),
    /// Rebuild tables and the text report from a saved fits.json.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Toggle {
    On,
    Off,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Patient CSV.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output_dir: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// Phase counts to sweep, as `A..B`.
    #[arg(long, value_parser = parse_phase_range, default_value = "1..7")]
    pub phases: PhaseRange,
    #[arg(long, value_enum, default_value = "on")]
    pub covariates: Toggle,
    /// Optimizer starts per fit.
    #[arg(long, default_value_t = 20)]
    pub starts: usize,
    #[arg(long, default_value_t = 2000)]
    pub max_iter: usize,
    /// JSON table of destination labels to exit stations.
    #[arg(long)]
    pub destinations: Option<PathBuf>,
    /// Skip standard errors.
    #[arg(long)]
    pub no_std_errors: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Chain-spec JSON; the built-in spec when omitted.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub output_dir: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000)]
    pub patients: usize,
    /// Exact number of patients leaving from each station, as `n1,n2,n3`
    /// (overrides --patients).
    #[arg(long, value_delimiter = ',')]
    pub exit_counts: Option<Vec<usize>>,
    /// File name inside the output directory.
    #[arg(long, default_value = "patients.csv")]
    pub file_name: String,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[arg(long, value_delimiter = ',', default_value = "1000,5000")]
    pub sizes: Vec<usize>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 2)]
    pub starts: usize,
    #[arg(long, default_value_t = 2000)]
    pub max_iter: usize,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// fits.json written by `fit`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output_dir: PathBuf,
}

pub fn parse_phase_range(s: &str) -> std::result::Result<PhaseRange, String> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| format!("expected A..B, got {s:?}"))?;
    let a: usize = a.trim().parse().map_err(|_| format!("bad lower bound in {s:?}"))?;
    let b: usize = b.trim().parse().map_err(|_| format!("bad upper bound in {s:?}"))?;
    PhaseRange::new(a, b).map_err(|e| e.to_string())
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            e.code()
        }
    }
}

pub fn run(cli: Cli) -> Result<i32> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        // a pool that already exists is kept
        if rayon::ThreadPoolBuilder::new().num_threads(t).build_global().is_err() {
            warn!("thread pool already initialized; --threads ignored");
        }
    }
    match cli.command {
        Command::Fit(a) => cmd_fit(&a),
        Command::Simulate(a) => cmd_simulate(&a).map(|_| 0),
        Command::Benchmark(a) => cmd_benchmark(&a).map(|_| 0),
        Command::Report(a) => cmd_report(&a).map(|_| 0),
    }
}

pub fn cmd_fit(a: &FitArgs) -> Result<i32> {
    if a.starts == 0 {
        return Err(Error::Config("--starts must be at least 1".into()));
    }
    let map = match &a.destinations {
        Some(p) => DestinationMap::from_json_file(p)?,
        None => DestinationMap::default(),
    };
    let ingested = ingest(&a.input)?;
    info!(
        "{} records read, {} rejected at ingestion",
        ingested.records.len(),
        ingested.rejects.len()
    );
    let mut ds = derive_stations(&ingested.records, &map);
    let mut rejects = ingested.rejects;
    rejects.append(&mut ds.rejects);
    rejects.sort_by_key(|r| r.line);
    ds.rejects = rejects;
    ds.records_in = ingested.records.len() + ds.rejects.len();
    if ds.patients() == 0 {
        return Err(Error::EmptyData("no usable records".into()));
    }
    let config = WorkflowConfig {
        fit: FitConfig {
            n_starts: a.starts,
            max_iter: a.max_iter,
            seed: a.seed,
            phase_range: a.phases,
            std_errors: !a.no_std_errors,
            ..FitConfig::default()
        },
        covariates: a.covariates == Toggle::On,
        ..WorkflowConfig::default()
    };
    let out = run_workflow(&ds, &config);
    let written = write_atomic(&a.output_dir, &render(&out)?)?;
    for p in &written {
        info!("wrote {}", p.display());
    }
    if out.failed() {
        warn!("at least one station was not fitted; see the report");
        return Ok(EXIT_STATION_FAILED);
    }
    Ok(0)
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<PathBuf> {
    let spec = match &a.input {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)?,
        None => ChainSpec::default(),
    };
    let sim = Simulator::new(spec)?;
    let patients = match &a.exit_counts {
        Some(c) => sim.simulate_with_exits(c, a.seed)?,
        None => sim.simulate(a.patients, a.seed),
    };
    let path = write_one(&a.output_dir, &a.file_name, to_csv(&patients))?;
    info!("wrote {} patients to {}", patients.len(), path.display());
    Ok(path)
}

pub fn cmd_benchmark(a: &BenchmarkArgs) -> Result<()> {
    if a.sizes.is_empty() || a.sizes.contains(&0) {
        return Err(Error::Config("--sizes must list positive sample sizes".into()));
    }
    let config = BenchmarkConfig {
        sizes: a.sizes.clone(),
        seed: a.seed,
        n_starts: a.starts.max(1),
        max_iter: a.max_iter,
        ..BenchmarkConfig::default()
    };
    let table = run_benchmark(&config)?;
    let text = table.to_text();
    print!("{text}");
    if let Some(dir) = &a.output_dir {
        write_atomic(
            dir,
            &[
                ("benchmark.csv", table.to_csv()),
                ("benchmark.txt", text),
                ("benchmark.json", serde_json::to_string_pretty(&table)?),
            ],
        )?;
    }
    Ok(())
}

pub fn cmd_report(a: &ReportArgs) -> Result<()> {
    let out: WorkflowOutput = serde_json::from_str(&std::fs::read_to_string(&a.input)?)?;
    write_atomic(&a.output_dir, &render(&out)?)?;
    Ok(())
}

fn write_one(dir: &Path, name: &str, body: String) -> Result<PathBuf> {
    if name.contains(['/', '\\']) {
        return Err(Error::Config(format!("file name {name:?} must not contain a path")));
    }
    Ok(write_atomic(dir, &[(name, body)])?.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phase_range_parsing() {
        assert_eq!(parse_phase_range("1..3").unwrap(), PhaseRange { min: 1, max: 3 });
        assert!(parse_phase_range("3..1").is_err());
        assert!(parse_phase_range("0..2").is_err());
        assert!(parse_phase_range("2").is_err());
    }

    #[test]
    fn usage_errors_have_their_own_code() {
        assert_eq!(main_with_args(["coxian", "fit"]), EXIT_USAGE);
        assert_eq!(main_with_args(["coxian", "frobnicate"]), EXIT_USAGE);
    }
}
