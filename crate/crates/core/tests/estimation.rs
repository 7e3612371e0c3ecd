mod common;

use common::rng;
use coxian::estimation::{
    conditioning_constant, fit, fit_conditional, fit_standard, fit_two_exit, fit_with_covariates,
    phase_sweep, CovariateMatrix, FitConfig, FitData, PhaseRange,
};
use coxian::multi_exit::{ExitRecord, StationChain};
use coxian::sampler::{rng_from_seed, sample_absorption_n, sample_chain, sample_two_exit, SamplingMethod};
use coxian::{MixtureParams, MultiExitMixtureParams};
use proptest::prelude::*;
use rand::Rng;

fn config(seed: u64) -> FitConfig {
    FitConfig {
        seed,
        ..FitConfig::default()
    }
}

fn standard_data(m: &MixtureParams, count: usize, seed: u64) -> FitData {
    FitData::durations(sample_absorption_n(m, seed, count, SamplingMethod::Routes).unwrap()).unwrap()
}

fn two_exit_records(p: &MultiExitMixtureParams, count: usize, seed: u64) -> Vec<ExitRecord> {
    let mut r = rng_from_seed(seed);
    (0..count)
        .map(|_| {
            let (t, exited) = sample_two_exit(p, &mut r);
            ExitRecord::new(t, exited).unwrap()
        })
        .collect()
}

fn loglik_at(m: &MixtureParams, data: &FitData) -> f64 {
    let eval = m.evaluator().unwrap();
    data.t().iter().map(|&t| eval.ln_density(t)).sum()
}

#[test]
fn exponential_mle_is_the_reciprocal_mean() {
    let m = MixtureParams::new(vec![0.5], vec![1.0]).unwrap();
    let data = standard_data(&m, 10_000, 41);
    let f = fit_standard(&data, 1, &config(1)).unwrap();
    let closed = 1.0 / data.mean_duration();
    assert!((f.theta[0] - closed).abs() < 1e-9, "{} vs {closed}", f.theta[0]);
    let n = data.len() as f64;
    assert!((f.loglik - n * (closed.ln() - 1.0)).abs() < 1e-6 * n);
}

#[test]
fn fitted_loglik_dominates_the_truth() {
    let truth = MixtureParams::new(vec![2.0, 0.4], vec![0.6, 0.4]).unwrap();
    let data = standard_data(&truth, 20_000, 42);
    let f = fit_standard(&data, 2, &config(2)).unwrap();
    assert!(f.loglik >= loglik_at(&truth, &data));
    assert!(f.n_starts_agreeing >= 2);
    let fitted = f.mixture_params().unwrap();
    assert!((fitted.mean() - truth.mean()).abs() < 0.05 * truth.mean());
}

#[test]
fn record_order_does_not_matter() {
    let truth = MixtureParams::new(vec![1.0, 0.25], vec![0.5, 0.5]).unwrap();
    let data = standard_data(&truth, 3000, 43);
    let mut t = data.t().to_vec();
    t.reverse();
    let reversed = FitData::durations(t).unwrap();
    let a = fit_standard(&data, 2, &config(3)).unwrap();
    let b = fit_standard(&reversed, 2, &config(3)).unwrap();
    assert!((a.loglik - b.loglik).abs() < 1e-8 * a.loglik.abs());
    for (x, y) in a.theta.iter().zip(&b.theta) {
        assert!((x - y).abs() < 1e-4 * x);
    }
}

#[test]
fn single_phase_exit_share_is_the_empirical_rate() {
    let p = MultiExitMixtureParams::new(vec![0.7], vec![0.35], vec![0.65]).unwrap();
    let records = two_exit_records(&p, 5000, 44);
    let data = FitData::two_exit(&records).unwrap();
    let f = fit_two_exit(&data, 1, &config(4)).unwrap();
    let rate = records.iter().filter(|r| r.exited).count() as f64 / records.len() as f64;
    assert!((f.pi.iter().sum::<f64>() - rate).abs() < 1e-6);
}

#[test]
fn two_phase_two_exit_recovers_stream_means() {
    let truth = MultiExitMixtureParams::new(vec![1.5, 0.2], vec![0.25, 0.1], vec![0.35, 0.3]).unwrap();
    let data = FitData::two_exit(&two_exit_records(&truth, 20_000, 45)).unwrap();
    let f = fit_two_exit(&data, 2, &config(5)).unwrap();
    let (m1, m2) = f.two_exit_params().unwrap().conditional_means();
    let (t1, t2) = truth.conditional_means();
    assert!((m1 - t1).abs() < 0.05 * t1, "exit 1: {m1} vs {t1}");
    assert!((m2 - t2).abs() < 0.05 * t2, "exit 2: {m2} vs {t2}");
}

#[test]
fn everyone_leaving_degenerates_to_a_standard_fit() {
    let truth = MixtureParams::new(vec![1.2, 0.3], vec![0.4, 0.6]).unwrap();
    let plain = standard_data(&truth, 4000, 46);
    let data = FitData::new(plain.t().to_vec(), Some(vec![true; plain.len()]), None).unwrap();
    let cfg = FitConfig {
        std_errors: true,
        ..config(6)
    };
    let f = fit_two_exit(&data, 2, &cfg).unwrap();
    let s = fit_standard(&plain, 2, &config(6)).unwrap();
    assert!(f.pi2.as_ref().unwrap().iter().sum::<f64>() < 1e-6);
    assert!((f.loglik - s.loglik).abs() < 1e-4);
    let se = f.std_errors.as_ref().expect("standard errors with boundary weights");
    assert!(se.pi2.as_ref().unwrap().iter().all(Option::is_none));
    assert!(!se.fixed.is_empty());
}

#[test]
fn certain_proceed_adds_nothing() {
    let prev_p = MultiExitMixtureParams::new(vec![0.9], vec![0.0], vec![1.0]).unwrap();
    let prev = FitData::two_exit(&two_exit_records(&prev_p, 2000, 47)).unwrap();
    let prev_fit = fit_two_exit(&prev, 1, &config(7)).unwrap();
    assert_eq!(prev_fit.pi2.as_ref().unwrap(), &vec![1.0]);
    let curr_p = MultiExitMixtureParams::new(vec![1.0, 0.3], vec![0.2, 0.3], vec![0.4, 0.1]).unwrap();
    let curr = FitData::two_exit(&two_exit_records(&curr_p, 2000, 48)).unwrap();
    let c = fit_conditional(&prev_fit, &prev, &curr, 2, &config(8)).unwrap();
    let plain = fit_two_exit(&curr, 2, &config(8)).unwrap();
    assert_eq!(c.conditioning_constant, Some(0.0));
    assert_eq!(c.loglik, plain.loglik);
    assert_eq!(c.theta, plain.theta);
    assert_eq!(c.pi, plain.pi);
}

/// Two-station chain; returns station-1 data for everyone and the aligned
/// station-1 / station-2 data of those who proceeded.
fn chain_data(chain: &StationChain, patients: usize, seed: u64) -> (FitData, FitData, FitData) {
    let mut r = rng_from_seed(seed);
    let paths: Vec<_> = (0..patients)
        .map(|_| sample_chain(chain, None, None, &mut r).unwrap())
        .collect();
    let first: Vec<ExitRecord> = paths
        .iter()
        .map(|p| ExitRecord::new(p.durations[0], p.exit_station == 1).unwrap())
        .collect();
    let onward: Vec<_> = paths.iter().filter(|p| p.exit_station == 2).collect();
    let prev = FitData::two_exit(
        &onward
            .iter()
            .map(|p| ExitRecord::new(p.durations[0], false).unwrap())
            .collect::<Vec<_>>(),
    )
    .unwrap();
    let second = FitData::durations(onward.iter().map(|p| p.durations[1]).collect()).unwrap();
    (FitData::two_exit(&first).unwrap(), prev, second)
}

#[test]
fn conditional_fit_recovers_the_second_station() {
    let s1 = MultiExitMixtureParams::new(vec![2.0, 0.5], vec![0.05, 0.05], vec![0.6, 0.3]).unwrap();
    let s2_mix = MixtureParams::new(vec![0.8, 0.1], vec![0.55, 0.45]).unwrap();
    let s2 = MultiExitMixtureParams::single_exit(&s2_mix);
    let chain = StationChain::new(vec![s1, s2]).unwrap();
    let (first, prev, second) = chain_data(&chain, 23_000, 49);
    assert!(second.len() >= 20_000);
    let prev_fit = fit(&first, 2, &config(9)).unwrap();
    let c = fit_conditional(&prev_fit, &prev, &second, 2, &config(10)).unwrap();
    let mean = c.mixture_params().unwrap().mean();
    assert!((mean - s2_mix.mean()).abs() < 0.05 * s2_mix.mean(), "{mean} vs {}", s2_mix.mean());

    // the reported loglik is the plain fit plus sum log(f2 / f) at the previous fit
    let plain = fit(&second, 2, &config(10)).unwrap();
    let params = prev_fit.two_exit_params().unwrap();
    let by_hand: f64 = prev
        .t()
        .iter()
        .map(|&t| {
            let (f1, f2) = params.density(t).unwrap();
            (f2 / (f1 + f2)).ln()
        })
        .sum();
    assert!((c.conditioning_constant.unwrap() - by_hand).abs() < 1e-9 * by_hand.abs());
    assert!((c.loglik - (plain.loglik + by_hand)).abs() < 1e-9 * c.loglik.abs());
    assert_eq!(conditioning_constant(&prev_fit, &prev).unwrap(), c.conditioning_constant.unwrap());
}

fn covariate_data(beta: f64, count: usize, seed: u64) -> FitData {
    let base = MultiExitMixtureParams::single_exit(&MixtureParams::new(vec![1.5, 0.3], vec![0.5, 0.5]).unwrap());
    let chain = StationChain::new(vec![base]).unwrap();
    let betas = vec![vec![beta]];
    let mut r = rng(seed);
    let mut t = Vec::with_capacity(count);
    let mut x = Vec::with_capacity(count);
    for _ in 0..count {
        let xi = if r.random::<f64>() < 0.4 { 1.0 } else { 0.0 };
        t.push(sample_chain(&chain, Some(&betas), Some(&[xi]), &mut r).unwrap().durations[0]);
        x.push(xi);
    }
    let cov = CovariateMatrix::new(vec!["flag".into()], x).unwrap();
    FitData::new(t, None, Some(cov)).unwrap()
}

#[test]
fn covariate_slope_is_recovered() {
    let data = covariate_data(2f64.ln(), 30_000, 50);
    let f = fit_with_covariates(&data, 2, &config(11)).unwrap();
    let b = f.beta()[0];
    assert!(b > 0.60 && b < 0.79, "beta = {b}");
}

#[test]
fn null_slope_stays_within_three_standard_errors() {
    let data = covariate_data(0.0, 10_000, 51);
    let cfg = FitConfig {
        std_errors: true,
        ..config(12)
    };
    let f = fit_with_covariates(&data, 2, &cfg).unwrap();
    let se = f.std_errors.as_ref().unwrap().beta[0];
    assert!(f.beta()[0].abs() < 3.0 * se, "{} (se {se})", f.beta()[0]);
}

#[test]
fn rescaling_time_rescales_the_rates() {
    let truth = MixtureParams::new(vec![1.0, 0.2], vec![0.3, 0.7]).unwrap();
    let data = standard_data(&truth, 3000, 52);
    let c = 60.0;
    let a = fit_standard(&data, 2, &config(13)).unwrap();
    let b = fit_standard(&data.scaled(c), 2, &config(13)).unwrap();
    let n = data.len() as f64;
    assert!((b.loglik - (a.loglik - n * c.ln())).abs() < 1e-6 * a.loglik.abs());
    for (x, y) in a.theta.iter().zip(&b.theta) {
        assert!((x / c - y).abs() < 1e-2 * y, "{x} vs {y}");
    }
}

#[test]
fn exponential_standard_error_is_theta_over_root_n() {
    let m = MixtureParams::new(vec![0.5], vec![1.0]).unwrap();
    let data = standard_data(&m, 10_000, 53);
    let cfg = FitConfig {
        std_errors: true,
        ..config(14)
    };
    let f = fit_standard(&data, 1, &cfg).unwrap();
    let se = f.std_errors.unwrap().theta[0];
    let analytic = f.theta[0] / (data.len() as f64).sqrt();
    assert!((se - analytic).abs() < 0.01 * analytic, "{se} vs {analytic}");
}

#[test]
fn doubling_the_sample_shrinks_errors_by_root_two() {
    let truth = MixtureParams::new(vec![2.0, 0.4], vec![0.6, 0.4]).unwrap();
    let big = standard_data(&truth, 40_000, 54);
    let small = FitData::durations(big.t()[..20_000].to_vec()).unwrap();
    let cfg = FitConfig {
        std_errors: true,
        ..config(15)
    };
    let a = fit_standard(&small, 2, &cfg).unwrap().std_errors.unwrap();
    let b = fit_standard(&big, 2, &cfg).unwrap().std_errors.unwrap();
    for (x, y) in a.theta.iter().zip(&b.theta) {
        let ratio = x / y;
        assert!((ratio - 2f64.sqrt()).abs() < 0.1 * 2f64.sqrt(), "ratio {ratio}");
    }
}

#[test]
fn bic_prefers_one_phase_for_exponential_data() {
    let m = MixtureParams::new(vec![0.5], vec![1.0]).unwrap();
    let hits = (0..10)
        .filter(|&seed| {
            let data = standard_data(&m, 10_000, 60 + seed);
            let cfg = FitConfig {
                phase_range: PhaseRange::new(1, 3).unwrap(),
                n_starts: 10,
                ..config(seed)
            };
            phase_sweep(&data.without_exits(), &cfg).bic_best == Some(1)
        })
        .count();
    assert!(hits >= 8, "{hits}/10");
}

#[test]
fn sweep_rows_follow_the_phase_range() {
    let truth = MixtureParams::new(vec![2.0, 0.2], vec![0.5, 0.5]).unwrap();
    let data = standard_data(&truth, 2000, 55);
    let cfg = FitConfig {
        phase_range: PhaseRange::new(2, 4).unwrap(),
        early_stop: false,
        n_starts: 5,
        ..config(16)
    };
    let table = phase_sweep(&data, &cfg);
    let phases: Vec<usize> = table.rows.iter().map(|r| r.phases).collect();
    assert_eq!(phases, vec![2, 3, 4]);
    assert!(table.rows.iter().all(|r| r.fit.is_some()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn fit_reports_consistent_criteria(seed in any::<u64>(), n in 1usize..=3, two_exit in any::<bool>()) {
        let truth = MultiExitMixtureParams::new(vec![1.0, 0.3], vec![0.2, 0.3], vec![0.3, 0.2]).unwrap();
        let records = two_exit_records(&truth, 300, seed);
        let data = if two_exit {
            FitData::two_exit(&records).unwrap()
        } else {
            FitData::durations(records.iter().map(|r| r.t).collect()).unwrap()
        };
        let f = fit(&data, n, &FitConfig { n_starts: 4, ..config(seed) }).unwrap();
        let k = if two_exit { 3 * n - 1 } else { 2 * n - 1 };
        prop_assert_eq!(f.n_params, k);
        prop_assert!((f.aic - (2.0 * k as f64 - 2.0 * f.loglik)).abs() < 1e-9 * f.aic.abs());
        prop_assert!((f.bic - (k as f64 * 300f64.ln() - 2.0 * f.loglik)).abs() < 1e-9 * f.bic.abs());
        prop_assert!(f.starts.iter().all(|s| s.final_loglik <= f.loglik + 1e-9 * f.loglik.abs()));
        prop_assert!(f.starts.iter().all(|s| s.final_loglik >= s.initial_loglik));
        let mass: f64 = f.pi.iter().chain(f.pi2.iter().flatten()).sum();
        prop_assert!((mass - 1.0).abs() < 1e-9);
        prop_assert!(f.theta.iter().all(|&t| t > 0.0 && t.is_finite()));
    }
}
