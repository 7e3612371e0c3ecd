#![allow(dead_code)]

use coxian::{CoxianParams, MixtureParams, MultiExitMixtureParams};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

pub fn random_coxian<R: Rng>(rng: &mut R, n: usize, lo: f64, hi: f64) -> CoxianParams {
    let lambda = (0..n - 1).map(|_| log_uniform(rng, lo, hi)).collect();
    let mu = (0..n).map(|_| log_uniform(rng, lo, hi)).collect();
    CoxianParams::new(lambda, mu).unwrap()
}

pub fn random_mixture<R: Rng>(rng: &mut R, n: usize) -> MixtureParams {
    random_coxian(rng, n, 0.05, 20.0).to_mixture().unwrap()
}

/// Two-exit mixture with every weight strictly positive.
pub fn random_two_exit<R: Rng>(rng: &mut R, n: usize, lo: f64, hi: f64) -> MultiExitMixtureParams {
    let theta: Vec<f64> = (0..n).map(|_| log_uniform(rng, lo, hi)).collect();
    let raw: Vec<f64> = (0..2 * n).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let pi1 = raw[..n].iter().map(|w| w / total).collect();
    let pi2 = raw[n..].iter().map(|w| w / total).collect();
    MultiExitMixtureParams::new(theta, pi1, pi2).unwrap()
}

/// `int_a^b f` by tanh-sinh on geometrically spaced pieces.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    let pieces = 40;
    let lo = if a > 0.0 { a } else { (b * 1e-9).max(1e-12) };
    let ratio = (b / lo).powf(1.0 / pieces as f64);
    let mut total = if a > 0.0 {
        0.0
    } else {
        quadrature::integrate(&f, 0.0, lo, 1e-14).integral
    };
    let mut left = lo;
    for i in 0..pieces {
        let right = if i + 1 == pieces { b } else { left * ratio };
        total += quadrature::integrate(&f, left, right, 1e-14).integral;
        left = right;
    }
    total
}

/// Upper limit beyond which a phase-type tail is below `e^-60`.
pub fn tail_limit(theta: &[f64]) -> f64 {
    let slowest = theta.iter().copied().fold(f64::INFINITY, f64::min);
    (60.0 + 5.0 * theta.len() as f64) / slowest
}

pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
