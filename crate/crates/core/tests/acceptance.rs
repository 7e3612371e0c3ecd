//! One line per acceptance criterion; exits non-zero if any fails.

mod common;

use std::time::Instant;

use common::{integrate, random_coxian, random_two_exit, rng, tail_limit};
use coxian::benchmark::{compare, one_exit_data, two_exit_data, BenchmarkConfig};
use coxian::estimation::{fit, phase_sweep, CovariateMatrix, FitConfig, FitData, FitResult, PhaseRange};
use coxian::matrix::{density_matrix, joint_density_matrix};
use coxian::multi_exit::{
    conditional_density, joint_density, joint_density_via_conditionals, ExitRecord, StationChain,
};
use coxian::pipeline::{derive_stations, ingest_str, DestinationMap};
use coxian::sampler::{rng_from_seed, sample_absorption_n, sample_two_exit, sample_two_exit_scaled, SamplingMethod};
use coxian::simulate::{to_csv, ChainSpec, Simulator};
use coxian::{CoxianParams, MixtureParams, MultiExitMixtureParams, TwoExitRates};
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// A synthetic fit checked again for start agreement.
struct Audited {
    label: String,
    fit: FitResult,
    truth_loglik: f64,
}

fn form_equivalence() -> Outcome {
    let started = Instant::now();
    let mut r = rng(1001);
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let n = r.random_range(1..=6);
        let c = random_coxian(&mut r, n, 0.05, 20.0);
        let m = c.to_mixture().unwrap();
        let eval = m.evaluator().unwrap();
        for _ in 0..20 {
            let t = r.random_range(0.0..4.0 * m.mean());
            let a = eval.density(t).unwrap();
            let b = density_matrix(&c, t).unwrap();
            worst = worst.max((a - b).abs() / b.abs().max(1.0));
        }
    }
    let secs = started.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-8 && secs < 30.0,
        format!("max scaled gap {worst:.2e} over 10000 points in {secs:.1} s"),
    )
}

fn normalization() -> Outcome {
    let mut r = rng(1002);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = r.random_range(1..=6);
        let m = random_coxian(&mut r, n, 0.05, 20.0).to_mixture().unwrap();
        let total = integrate(|t| m.density(t).unwrap(), 0.0, tail_limit(m.theta()));
        worst = worst.max((total - 1.0).abs());
    }
    let mut worst_two: f64 = 0.0;
    for _ in 0..100 {
        let n = r.random_range(1..=6);
        let p = random_two_exit(&mut r, n, 0.05, 20.0);
        let upper = tail_limit(p.theta());
        let m1 = integrate(|t| p.density(t).unwrap().0, 0.0, upper);
        let m2 = integrate(|t| p.density(t).unwrap().1, 0.0, upper);
        worst_two = worst_two
            .max((m1 - p.exit1_probability()).abs())
            .max((m2 - p.exit2_probability()).abs());
    }
    outcome(
        worst <= 1e-6 && worst_two <= 1e-6,
        format!("max |mass - 1| {worst:.2e}; max two-exit gap {worst_two:.2e}"),
    )
}

fn round_trips() -> Outcome {
    let mut r = rng(1003);
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let n = r.random_range(1..=6);
        let lambda: Vec<f64> = (0..n - 1).map(|_| r.random_range(0.1..5.0)).collect();
        let mu: Vec<f64> = (0..n).map(|_| r.random_range(0.1..5.0)).collect();
        let back = CoxianParams::new(lambda.clone(), mu.clone())
            .unwrap()
            .to_mixture()
            .unwrap()
            .to_coxian()
            .unwrap();
        for (a, b) in back.lambda().iter().chain(back.mu()).zip(lambda.iter().chain(&mu)) {
            worst = worst.max((a - b).abs());
        }
    }
    let mut worst_two: f64 = 0.0;
    for _ in 0..500 {
        let n = r.random_range(1..=6);
        let draw = |r: &mut rand_chacha::ChaCha8Rng, k: usize| -> Vec<f64> {
            (0..k).map(|_| r.random_range(0.1..5.0)).collect()
        };
        let (lambda, mu1, mu2) = (draw(&mut r, n - 1), draw(&mut r, n), draw(&mut r, n));
        let back = TwoExitRates::new(lambda.clone(), mu1.clone(), mu2.clone())
            .unwrap()
            .to_mixture()
            .unwrap()
            .to_rates()
            .unwrap();
        let got = back.lambda.iter().chain(&back.mu1).chain(&back.mu2);
        for (a, b) in got.zip(lambda.iter().chain(&mu1).chain(&mu2)) {
            worst_two = worst_two.max((a - b).abs());
        }
    }
    outcome(
        worst <= 1e-10 && worst_two <= 1e-10,
        format!("max error {worst:.2e} single exit, {worst_two:.2e} two exits (500 each)"),
    )
}

fn joint_identities() -> Outcome {
    let mut r = rng(1004);
    let mut worst_matrix: f64 = 0.0;
    let mut worst_bayes: f64 = 0.0;
    for _ in 0..300 {
        let phases: Vec<usize> = (0..3).map(|_| r.random_range(1..=4)).collect();
        let s1 = random_two_exit(&mut r, phases[0], 0.2, 5.0);
        let s2 = random_two_exit(&mut r, phases[1], 0.2, 5.0);
        let s3 = MultiExitMixtureParams::single_exit(&random_coxian(&mut r, phases[2], 0.2, 5.0).to_mixture().unwrap());
        let chain = StationChain::new(vec![s1, s2, s3]).unwrap();
        let rates: Vec<TwoExitRates> = chain.stations().iter().map(|s| s.to_rates().unwrap()).collect();
        for exit in 1..=3 {
            let t: Vec<f64> = (0..exit).map(|_| r.random_range(0.05..6.0)).collect();
            let g = joint_density(&chain, &t, exit).unwrap();
            let m = joint_density_matrix(&rates, &t, exit).unwrap();
            worst_matrix = worst_matrix.max((g - m).abs() / g);
            let via = joint_density_via_conditionals(&chain, &t, exit).unwrap();
            worst_bayes = worst_bayes.max((g - via).abs() / g);
            if exit >= 2 {
                // conditional at station 2 equals joint over the station-1 marginal
                let (f1, f2) = chain.station(0).density(t[0]).unwrap();
                let (c1, c2) = conditional_density(chain.station(0), t[0], chain.station(1), t[1]).unwrap();
                let (g1, g2) = chain.station(1).density(t[1]).unwrap();
                let expect = [f2 * g1 / (f1 + f2), f2 * g2 / (f1 + f2)];
                worst_bayes = worst_bayes
                    .max((c1 - expect[0]).abs() / expect[0])
                    .max((c2 - expect[1]).abs() / expect[1]);
            }
        }
    }
    outcome(
        worst_matrix <= 1e-10 && worst_bayes <= 1e-10,
        format!("max relative gap {worst_matrix:.2e} against transfer matrices, {worst_bayes:.2e} Bayes"),
    )
}

fn two_exit_loglik(p: &MultiExitMixtureParams, data: &FitData) -> f64 {
    let eval = p.evaluator().unwrap();
    let exits = data.exits().unwrap();
    data.t().iter().zip(exits).map(|(&t, &e)| eval.ln_density(t, e)).sum()
}

fn simulation_estimation(audit: &mut Vec<Audited>) -> Outcome {
    let started = Instant::now();
    let models = [
        MultiExitMixtureParams::new(vec![1.5, 0.2], vec![0.25, 0.1], vec![0.35, 0.3]).unwrap(),
        MultiExitMixtureParams::new(vec![0.4, 0.05], vec![0.1, 0.3], vec![0.45, 0.15]).unwrap(),
    ];
    let mut hits = 0;
    for seed in 0..10u64 {
        let truth = &models[seed as usize % 2];
        let mut r = rng_from_seed(2000 + seed);
        let records: Vec<ExitRecord> = (0..20_000)
            .map(|_| {
                let (t, e) = sample_two_exit(truth, &mut r);
                ExitRecord::new(t, e).unwrap()
            })
            .collect();
        let data = FitData::two_exit(&records).unwrap();
        let f = fit(&data, 2, &FitConfig { seed, ..FitConfig::default() }).unwrap();
        let p = f.two_exit_params().unwrap();
        let (m1, m2) = p.conditional_means();
        let (t1, t2) = truth.conditional_means();
        let ok = (m1 - t1).abs() <= 0.05 * t1
            && (m2 - t2).abs() <= 0.05 * t2
            && (p.exit1_probability() - truth.exit1_probability()).abs() <= 0.02;
        hits += ok as usize;
        audit.push(Audited {
            label: format!("two-exit seed {seed}"),
            truth_loglik: two_exit_loglik(truth, &data),
            fit: f,
        });
    }
    let secs = started.elapsed().as_secs_f64();
    outcome(hits >= 9 && secs < 300.0, format!("{hits}/10 seeds recovered in {secs:.1} s"))
}

fn covariate_fit(beta: f64, seed: u64, std_errors: bool) -> (FitResult, f64) {
    let truth = MultiExitMixtureParams::new(vec![1.5, 0.3], vec![0.5, 0.5], vec![0.0, 0.0]).unwrap();
    let mut r = rng_from_seed(3000 + seed);
    let count = 30_000;
    let (mut t, mut x) = (Vec::with_capacity(count), Vec::with_capacity(count));
    let mut truth_loglik = 0.0;
    let eval = truth.evaluator().unwrap();
    for _ in 0..count {
        let xi = if r.random::<f64>() < 0.3 { 1.0 } else { 0.0 };
        let scale = (-beta * xi).exp();
        let (ti, _) = sample_two_exit_scaled(&truth, scale, &mut r);
        truth_loglik += scale.ln() + eval.ln_density(scale * ti, true);
        t.push(ti);
        x.push(xi);
    }
    let cov = CovariateMatrix::new(vec!["flag".into()], x).unwrap();
    let data = FitData::new(t, None, Some(cov)).unwrap();
    let config = FitConfig {
        seed,
        std_errors,
        ..FitConfig::default()
    };
    (fit(&data, 2, &config).unwrap(), truth_loglik)
}

fn covariate_recovery(audit: &mut Vec<Audited>) -> Outcome {
    let target = 2f64.ln();
    let mut slope_hits = 0;
    let mut null_hits = 0;
    for seed in 0..10u64 {
        let (f, truth_loglik) = covariate_fit(target, seed, false);
        slope_hits += ((f.beta()[0] - target).abs() <= 0.10) as usize;
        audit.push(Audited {
            label: format!("slope seed {seed}"),
            fit: f,
            truth_loglik,
        });
        let (f, truth_loglik) = covariate_fit(0.0, seed, true);
        let se = f.std_errors.as_ref().map_or(f64::NAN, |s| s.beta[0]);
        null_hits += (f.beta()[0].abs() < 3.0 * se) as usize;
        audit.push(Audited {
            label: format!("null slope seed {seed}"),
            fit: f,
            truth_loglik,
        });
    }
    outcome(
        slope_hits >= 9 && null_hits >= 9,
        format!("slope within 0.10 in {slope_hits}/10 seeds; null within 3 SE in {null_hits}/10"),
    )
}

fn model_selection() -> Outcome {
    let started = Instant::now();
    let generators = [
        MixtureParams::new(vec![0.5], vec![1.0]).unwrap(),
        MixtureParams::new(vec![2.0, 0.4], vec![0.6, 0.4]).unwrap(),
        MixtureParams::new(vec![4.0, 0.8, 0.1], vec![0.3, 0.3, 0.4]).unwrap(),
    ];
    let mut summary = Vec::new();
    let mut pass = true;
    for (i, g) in generators.iter().enumerate() {
        let truth = i + 1;
        let mut hits = 0;
        for seed in 0..10u64 {
            let t = sample_absorption_n(g, 4000 + 100 * truth as u64 + seed, 50_000, SamplingMethod::Routes).unwrap();
            let config = FitConfig {
                seed,
                phase_range: PhaseRange::new(1, 6).unwrap(),
                ..FitConfig::default()
            };
            let sweep = phase_sweep(&FitData::durations(t).unwrap(), &config);
            hits += (sweep.bic_best == Some(truth)) as usize;
        }
        pass &= hits >= 8;
        summary.push(format!("n={truth}: {hits}/10"));
    }
    outcome(
        pass,
        format!("{} in {:.1} s", summary.join(", "), started.elapsed().as_secs_f64()),
    )
}

fn speed() -> Outcome {
    let config = BenchmarkConfig::default();
    let one = compare(&one_exit_data(5000, config.seed).unwrap(), &config).unwrap();
    let two = compare(&two_exit_data(5000, config.seed).unwrap(), &config).unwrap();
    let pass = [&one, &two]
        .iter()
        .all(|c| c.relative_speed() >= 20.0 && c.loglik_gap() <= 1e-6);
    outcome(
        pass,
        format!(
            "one exit x{:.0} (gap {:.1e}), two exits x{:.0} (gap {:.1e}) at 5,000 records",
            one.relative_speed(),
            one.loglik_gap(),
            two.relative_speed(),
            two.loglik_gap()
        ),
    )
}

const TABLE_ROWS: &str = "patient_id,registration_time,arrival_mode,age,sex,triage_time,examination_time,departure_time,destination\n\
818897,2015-01-01 00:54,Ambulance,36,F,00:59,03:00,2015-01-01 09:00,Discharged home\n\
818954,2015-01-01 12:39,Other,78,F,12:54,-,2015-01-01 13:22,Did not wait\n";

fn pipeline_fidelity() -> Outcome {
    let sim = Simulator::new(ChainSpec::default()).unwrap();
    let patients = sim.simulate_with_exits(&[129, 2785, 34_292], 5000).unwrap();
    let ingested = ingest_str(&to_csv(&patients)).unwrap();
    let ds = derive_stations(&ingested.records, &DestinationMap::default());
    let counts = ds.exit_counts();
    let total = ds.patients();

    let rows = ingest_str(TABLE_ROWS).unwrap();
    let table = derive_stations(&rows.records, &DestinationMap::default());
    let first = (table.stations[0].t.clone(), table.stations[1].t.clone(), table.stations[2].t.clone());
    let durations_ok = first.0 == [5.0, 15.0]
        && first.1 == [121.0, 28.0]
        && first.2 == [360.0]
        && table.exit_counts() == [0, 1, 1]
        && rows.records[1].examination_time.is_none()
        && rows.records[1].destination == "Did not wait";
    outcome(
        counts == [129, 2785, 34_292] && total == 37_206 && ingested.rejects.is_empty() && durations_ok,
        format!(
            "exits {counts:?} of {total}; sample rows give (5, 121, 360) and (15, 28): {durations_ok}"
        ),
    )
}

fn multistart(audit: &[Audited]) -> Outcome {
    let mut bad = Vec::new();
    for a in audit {
        let agree = a.fit.n_starts_agreeing >= 2 && a.fit.n_starts == 20;
        let dominates = a.fit.loglik >= a.truth_loglik - 1e-6;
        if !(agree && dominates) {
            bad.push(format!(
                "{} ({} of {} agree, loglik {:.4} vs truth {:.4})",
                a.label, a.fit.n_starts_agreeing, a.fit.n_starts, a.fit.loglik, a.truth_loglik
            ));
        }
    }
    let min_agree = audit.iter().map(|a| a.fit.n_starts_agreeing).min().unwrap_or(0);
    outcome(
        bad.is_empty() && !audit.is_empty(),
        if bad.is_empty() {
            format!("{} fits, at least {min_agree} of 20 starts agree on each", audit.len())
        } else {
            bad.join("; ")
        },
    )
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    // `cargo test -- --list` and similar harness probes
    if args.iter().any(|a| a == "--list") {
        return;
    }
    let mut audit = Vec::new();
    let mut failed = 0;
    let mut line = |id: u32, name: &str, o: Outcome| {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("[{tag}] {id:>2}. {name}: {}", o.detail);
        failed += (!o.pass) as usize;
    };
    line(1, "form equivalence", form_equivalence());
    line(2, "normalization", normalization());
    line(3, "round trips", round_trips());
    line(4, "joint and conditional identities", joint_identities());
    line(5, "simulation-estimation loop", simulation_estimation(&mut audit));
    line(6, "covariate recovery", covariate_recovery(&mut audit));
    line(7, "model selection", model_selection());
    line(8, "speed", speed());
    line(9, "pipeline fidelity", pipeline_fidelity());
    line(10, "multi-start robustness", multistart(&audit));
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
