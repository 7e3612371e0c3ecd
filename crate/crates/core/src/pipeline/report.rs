use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::covariates::COVARIATE_NAMES;
use crate::error::{Error, Result};
use crate::estimation::{FitResult, SweepTable};
use crate::pipeline::stations::STATION_COUNT;
use crate::pipeline::workflow::{StationOutcome, StationStatus, WorkflowOutput};

pub const FITS_FILE: &str = "fits.json";
pub const SWEEP_FILE: &str = "sweep_table.csv";
pub const COVARIATE_FILE: &str = "covariate_table.csv";
pub const PLOT_FILE: &str = "plot_data.csv";
pub const REJECTS_FILE: &str = "rejects.csv";
pub const REPORT_FILE: &str = "report.txt";

/// Two-sided normal critical values for the 5% and 1% levels.
const Z_5: f64 = 1.959_963_984_540_054;
const Z_1: f64 = 2.575_829_303_548_901;

pub fn covariate_label(name: &str) -> &str {
    match name {
        "night" => "Arrival time: Night",
        "ambulance" => "Arrival mode: Ambulance",
        "female" => "Sex: Female",
        "age_lt18" => "Age: <18",
        "age_45_64" => "Age: 45-64",
        "age_ge65" => "Age: >65",
        other => other,
    }
}

/// `**` beyond the 1% level, `*` beyond 5%.
pub fn significance_stars(beta: f64, se: f64) -> &'static str {
    if !(se > 0.0 && se.is_finite()) {
        return "";
    }
    let z = (beta / se).abs();
    if z > Z_1 {
        "**"
    } else if z > Z_5 {
        "*"
    } else {
        ""
    }
}

fn csv_string(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn sweeps(o: &StationOutcome) -> [Option<&SweepTable>; 2] {
    [o.null_sweep.as_ref(), o.covariate_sweep.as_ref()]
}

fn phase_rows(out: &WorkflowOutput) -> Vec<usize> {
    let mut phases: Vec<usize> = out
        .stations
        .iter()
        .flat_map(|o| sweeps(o).into_iter().flatten())
        .flat_map(|s| s.rows.iter().map(|r| r.phases))
        .collect();
    phases.sort_unstable();
    phases.dedup();
    phases
}

/// AIC/BIC per phase count: one column pair per station and model.
/// Missing fits are `-`.
pub fn sweep_table_csv(out: &WorkflowOutput) -> Result<String> {
    let mut header = vec!["phases".to_string()];
    for m in 1..=STATION_COUNT {
        for model in ["null", "covariates"] {
            for ic in ["aic", "bic"] {
                header.push(format!("s{m}_{model}_{ic}"));
            }
        }
    }
    let rows: Vec<Vec<String>> = phase_rows(out)
        .into_iter()
        .map(|n| {
            let mut row = vec![n.to_string()];
            for o in &out.stations {
                for sweep in sweeps(o) {
                    match sweep.and_then(|s| s.fit_for(n)) {
                        Some(f) => row.extend([format!("{:.2}", f.aic), format!("{:.2}", f.bic)]),
                        None => row.extend(["-".to_string(), "-".to_string()]),
                    }
                }
            }
            row
        })
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    csv_string(&header, &rows)
}

/// Text version of the sweep table; `*` marks the lowest-BIC row of each column pair.
pub fn sweep_table_text(out: &WorkflowOutput) -> String {
    const W: usize = 12;
    let mut s = String::new();
    let _ = write!(s, "{:<7}", "");
    for o in &out.stations {
        let _ = write!(s, "| {:<w$}", format!("{} (S{})", o.name, o.station), w = 4 * W + 3);
    }
    s.push('\n');
    let _ = write!(s, "{:<7}", "Phases");
    for _ in &out.stations {
        let _ = write!(s, "| {:<w$} {:<w$} ", "Null", "Covariates", w = 2 * W + 1);
    }
    s.push('\n');
    let _ = write!(s, "{:<7}", "");
    for _ in &out.stations {
        let _ = write!(s, "| {:>W$} {:>W$} {:>W$} {:>W$} ", "AIC", "BIC", "AIC", "BIC");
    }
    s.push('\n');
    for n in phase_rows(out) {
        let _ = write!(s, "{n:<7}");
        for o in &out.stations {
            s.push_str("| ");
            for sweep in sweeps(o) {
                let best = sweep.and_then(|t| t.bic_best) == Some(n);
                let mark = if best { "*" } else { "" };
                match sweep.and_then(|t| t.fit_for(n)) {
                    Some(f) => {
                        let _ = write!(
                            s,
                            "{:>W$} {:>W$} ",
                            format!("{:.2}{mark}", f.aic),
                            format!("{:.2}{mark}", f.bic)
                        );
                    }
                    None => {
                        let _ = write!(s, "{:>W$} {:>W$} ", "-", "-");
                    }
                }
            }
        }
        s.push('\n');
    }
    s.push_str("* lowest BIC\n");
    s
}

struct CovCell {
    beta: f64,
    se: Option<f64>,
}

fn covariate_cell(fit: Option<&FitResult>, name: &str) -> Option<CovCell> {
    let fit = fit?;
    let model = fit.covariates.as_ref()?;
    let j = model.names.iter().position(|n| n == name)?;
    let se = fit.std_errors.as_ref().and_then(|e| e.beta.get(j).copied());
    Some(CovCell {
        beta: model.beta[j],
        se: se.filter(|v| v.is_finite()),
    })
}

fn prevalence_of(out: &WorkflowOutput, name: &str) -> Option<f64> {
    out.covariate_prevalence
        .iter()
        .find(|(n, _)| n == name)
        .map(|(_, p)| *p)
}

/// Slopes of each station's BIC-best covariate model: beta, exp(beta), SE
/// and significance stars.
pub fn covariate_table_csv(out: &WorkflowOutput) -> Result<String> {
    let mut header = vec!["covariate".to_string(), "prevalence".to_string()];
    for m in 1..=STATION_COUNT {
        for col in ["beta", "exp_beta", "se", "stars"] {
            header.push(format!("s{m}_{col}"));
        }
    }
    let rows: Vec<Vec<String>> = COVARIATE_NAMES
        .iter()
        .map(|&name| {
            let mut row = vec![
                name.to_string(),
                prevalence_of(out, name).map_or("-".into(), |p| format!("{p:.4}")),
            ];
            for o in &out.stations {
                match covariate_cell(o.covariate_selected(), name) {
                    Some(c) => row.extend([
                        format!("{:.6}", c.beta),
                        format!("{:.6}", c.beta.exp()),
                        c.se.map_or("-".into(), |v| format!("{v:.6}")),
                        c.se.map_or("", |v| significance_stars(c.beta, v)).to_string(),
                    ]),
                    None => row.extend(["-", "-", "-", ""].map(String::from)),
                }
            }
            row
        })
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    csv_string(&header, &rows)
}

pub fn covariate_table_text(out: &WorkflowOutput) -> String {
    const W: usize = 11;
    let mut s = String::new();
    let _ = write!(s, "{:<26}", "Covariate");
    for o in &out.stations {
        let _ = write!(s, "| {:<w$}", format!("{} (S{})", o.name, o.station), w = 2 * W + 1);
    }
    s.push('\n');
    let _ = write!(s, "{:<26}", "");
    for _ in &out.stations {
        let _ = write!(s, "| {:>W$} {:>W$}", "beta", "exp(beta)");
    }
    s.push('\n');
    for &name in &COVARIATE_NAMES {
        let _ = write!(s, "{:<26}", covariate_label(name));
        let cells: Vec<Option<CovCell>> = out
            .stations
            .iter()
            .map(|o| covariate_cell(o.covariate_selected(), name))
            .collect();
        for c in &cells {
            match c {
                Some(c) => {
                    let stars = c.se.map_or("", |v| significance_stars(c.beta, v));
                    let _ = write!(s, "| {:>W$} {:>W$.3}", format!("{:.3}{stars}", c.beta), c.beta.exp());
                }
                None => {
                    let _ = write!(s, "| {:>W$} {:>W$}", "-", "-");
                }
            }
        }
        s.push('\n');
        let prev = prevalence_of(out, name).map_or(String::new(), |p| format!("{:.0}%", 100.0 * p));
        let _ = write!(s, "{prev:<26}");
        for c in &cells {
            let se = c
                .as_ref()
                .and_then(|c| c.se)
                .map_or(String::new(), |v| format!("({v:.3})"));
            let _ = write!(s, "| {:>W$} {:>W$}", se, "");
        }
        s.push('\n');
    }
    s.push_str("* and ** mark the 5% and 1% significance levels; standard errors in brackets\n");
    s
}

pub fn plot_csv(out: &WorkflowOutput) -> Result<String> {
    let rows: Vec<Vec<String>> = out
        .plot
        .iter()
        .map(|r| {
            vec![
                r.station.to_string(),
                r.stream.clone(),
                r.bin.to_string(),
                format!("{}", r.lower),
                format!("{}", r.upper),
                format!("{:e}", r.observed_density),
                format!("{:e}", r.fitted_density),
            ]
        })
        .collect();
    csv_string(
        &["station", "stream", "bin", "lower", "upper", "observed_density", "fitted_density"],
        &rows,
    )
}

pub fn rejects_csv(out: &WorkflowOutput) -> Result<String> {
    let rows: Vec<Vec<String>> = out
        .rejects
        .iter()
        .map(|r| vec![r.line.to_string(), r.patient_id.clone(), r.reason.clone()])
        .collect();
    csv_string(&["line", "patient_id", "reason"], &rows)
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

fn describe_fit(s: &mut String, f: &FitResult) {
    let _ = writeln!(
        s,
        "  {} phases, {} model: loglik {:.4}, AIC {:.2}, BIC {:.2}, {} parameters, {} records",
        f.phases,
        if f.covariates.is_some() { "covariate" } else { "null" },
        f.loglik,
        f.aic,
        f.bic,
        f.n_params,
        f.n_obs
    );
    let _ = writeln!(s, "  theta = {}", fmt_vec(&f.theta));
    let _ = writeln!(s, "  pi (exit) = {}", fmt_vec(&f.pi));
    if let Some(p2) = &f.pi2 {
        let _ = writeln!(s, "  pi (proceed) = {}", fmt_vec(p2));
        let exit: f64 = f.pi.iter().sum();
        let _ = writeln!(s, "  exit probability = {exit:.4}");
    }
    if let Ok(mean) = f.mean_for(None) {
        let _ = writeln!(s, "  mean sojourn at baseline covariates = {mean:.3} min");
    }
    if let Some(c) = f.conditioning_constant {
        let _ = writeln!(s, "  conditioning constant from the previous station = {c:.4}");
    }
    let _ = writeln!(
        s,
        "  {} of {} starts agree with the best optimum{}",
        f.n_starts_agreeing,
        f.n_starts,
        if f.converged { "" } else { " (not converged)" }
    );
    if f.jittered {
        let _ = writeln!(s, "  near-equal rates were separated by a relative 1e-7 before evaluation");
    }
    for w in &f.warnings {
        let _ = writeln!(s, "  warning: {w}");
    }
}

/// Human-readable summary with both tables.
pub fn text_report(out: &WorkflowOutput) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "Coxian phase-type fit report");
    let _ = writeln!(s);
    let fitted = out.stations.first().map_or(0, |o| o.records);
    let _ = writeln!(
        s,
        "Records: {} in, {} used, {} rejected",
        out.records_in,
        fitted,
        out.rejects.len()
    );
    let _ = writeln!(
        s,
        "Exits by station: S1 {}, S2 {}, S3 {}",
        out.exit_counts[0], out.exit_counts[1], out.exit_counts[2]
    );
    if out.shifted_zero > 0 {
        let _ = writeln!(
            s,
            "{} zero durations were shifted to {} min",
            out.shifted_zero, out.zero_shift_minutes
        );
    }
    let _ = writeln!(
        s,
        "Phase range {}..{}, {} starts per fit, seed {}",
        out.config.fit.phase_range.min, out.config.fit.phase_range.max, out.config.fit.n_starts, out.config.fit.seed
    );
    for o in &out.stations {
        let _ = writeln!(s);
        let _ = writeln!(s, "Station {} ({}): {} records, {} exit here", o.station, o.name, o.records, o.exits);
        match &o.status {
            StationStatus::Fitted => {}
            StationStatus::Failed(r) => {
                let _ = writeln!(s, "  FAILED: {r}");
            }
            StationStatus::Blocked(r) => {
                let _ = writeln!(s, "  BLOCKED: {r}");
            }
        }
        if let Some(f) = &o.selected {
            describe_fit(&mut s, f);
        }
        for w in &o.warnings {
            let _ = writeln!(s, "  warning: {w}");
        }
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "AIC and BIC by number of phases");
    s.push_str(&sweep_table_text(out));
    if out.stations.iter().any(|o| o.covariate_sweep.is_some()) {
        let _ = writeln!(s);
        let _ = writeln!(s, "Covariate effects (positive beta lengthens the mean sojourn by exp(beta))");
        s.push_str(&covariate_table_text(out));
    }
    s
}

/// Rendered artifact files, in write order.
pub fn render(out: &WorkflowOutput) -> Result<Vec<(&'static str, String)>> {
    Ok(vec![
        (FITS_FILE, serde_json::to_string_pretty(out)?),
        (SWEEP_FILE, sweep_table_csv(out)?),
        (COVARIATE_FILE, covariate_table_csv(out)?),
        (PLOT_FILE, plot_csv(out)?),
        (REJECTS_FILE, rejects_csv(out)?),
        (REPORT_FILE, text_report(out)),
    ])
}

/// Writes each file through a temporary sibling and a rename, so a reader
/// never sees a partial file.
pub fn write_atomic(dir: &Path, files: &[(&str, String)]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut staged = Vec::with_capacity(files.len());
    for (name, body) in files {
        let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
        if let Err(e) = fs::write(&tmp, body) {
            for (t, _) in &staged {
                let _ = fs::remove_file(t);
            }
            let _ = fs::remove_file(&tmp);
            return Err(e.into());
        }
        staged.push((tmp, dir.join(name)));
    }
    let mut written = Vec::with_capacity(staged.len());
    for (tmp, dest) in staged {
        fs::rename(&tmp, &dest)?;
        written.push(dest);
    }
    Ok(written)
}

pub fn write_report(out: &WorkflowOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    write_atomic(dir, &render(out)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stars_follow_normal_quantiles() {
        assert_eq!(significance_stars(0.081, 0.015), "**");
        assert_eq!(significance_stars(-0.312, 0.147), "*");
        assert_eq!(significance_stars(0.035, 0.083), "");
        assert_eq!(significance_stars(1.0, f64::NAN), "");
        assert_eq!(significance_stars(1.97, 1.0), "*");
        assert_eq!(significance_stars(2.58, 1.0), "**");
    }

    #[test]
    fn labels_cover_all_covariates() {
        for n in COVARIATE_NAMES {
            assert_ne!(covariate_label(n), n);
        }
    }

    #[test]
    fn atomic_write_leaves_no_temp_files() {
        let dir = tempfile::tempdir().unwrap();
        let written = write_atomic(dir.path(), &[("a.txt", "x".into()), ("b.txt", "y".into())]).unwrap();
        assert_eq!(written.len(), 2);
        let names: Vec<String> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect();
        assert_eq!(names.len(), 2);
        assert!(names.iter().all(|n| !n.ends_with(".tmp")));
    }
}
