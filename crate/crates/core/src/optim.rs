//! Derivative-free Nelder-Mead minimization with restarts.
//!
//! Uses the dimension-adaptive coefficients of Gao & Han (2012) for d > 2
//! and the classic (1, 2, 1/2, 1/2) set otherwise. After the simplex
//! collapses the search restarts from the best vertex with a fresh simplex;
//! it stops once a restart no longer improves the minimum by more than the
//! tolerance.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadConfig {
    /// Budget of simplex iterations, shared across restarts.
    pub max_iter: usize,
    /// Convergence when `f_worst - f_best <= rel_tol * |f_best| + abs_tol`.
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Edge length of the initial simplex along each axis.
    pub initial_step: f64,
    pub max_restarts: usize,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        Self {
            max_iter: 2000,
            rel_tol: 1e-8,
            abs_tol: 1e-12,
            initial_step: 0.5,
            max_restarts: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

struct Coefficients {
    reflect: f64,
    expand: f64,
    contract: f64,
    shrink: f64,
}

impl Coefficients {
    fn for_dimension(d: usize) -> Self {
        if d <= 2 {
            Self {
                reflect: 1.0,
                expand: 2.0,
                contract: 0.5,
                shrink: 0.5,
            }
        } else {
            let d = d as f64;
            Self {
                reflect: 1.0,
                expand: 1.0 + 2.0 / d,
                contract: 0.75 - 1.0 / (2.0 * d),
                shrink: 1.0 - 1.0 / d,
            }
        }
    }
}

/// Minimizes `f` from `x0`. Non-finite objective values count as `+inf`.
pub fn minimize<F>(mut f: F, x0: &[f64], config: &NelderMeadConfig) -> NelderMeadOutcome
where
    F: FnMut(&[f64]) -> f64,
{
    let d = x0.len();
    let mut evaluations = 0usize;
    let mut eval = |x: &[f64]| {
        evaluations += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    if d == 0 {
        let value = eval(x0);
        return NelderMeadOutcome {
            x: vec![],
            value,
            iterations: 0,
            evaluations: 1,
            converged: true,
        };
    }
    let coef = Coefficients::for_dimension(d);
    let mut best_x = x0.to_vec();
    let mut best_f = eval(x0);
    let mut iterations = 0usize;
    let mut converged = false;
    let mut restarts = 0usize;

    loop {
        let step = if restarts == 0 {
            config.initial_step
        } else {
            config.initial_step * 0.5
        };
        let start_f = best_f;
        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(d + 1);
        simplex.push((best_x.clone(), best_f));
        for i in 0..d {
            let mut x = best_x.clone();
            x[i] += step;
            let fx = eval(&x);
            simplex.push((x, fx));
        }
        let mut collapsed = false;
        while iterations < config.max_iter {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let f_best = simplex[0].1;
            let f_worst = simplex[d].1;
            if f_worst.is_finite()
                && f_worst - f_best <= config.rel_tol * f_best.abs() + config.abs_tol
            {
                collapsed = true;
                break;
            }
            iterations += 1;

            let mut centroid = vec![0.0; d];
            for (x, _) in &simplex[..d] {
                for (c, xi) in centroid.iter_mut().zip(x) {
                    *c += xi / d as f64;
                }
            }
            let toward = |t: f64, worst: &[f64]| -> Vec<f64> {
                centroid
                    .iter()
                    .zip(worst)
                    .map(|(c, w)| c + t * (c - w))
                    .collect()
            };
            let worst = simplex[d].0.clone();
            let xr = toward(coef.reflect, &worst);
            let fr = eval(&xr);
            if fr < simplex[0].1 {
                let xe = toward(coef.reflect * coef.expand, &worst);
                let fe = eval(&xe);
                simplex[d] = if fe < fr { (xe, fe) } else { (xr, fr) };
                continue;
            }
            if fr < simplex[d - 1].1 {
                simplex[d] = (xr, fr);
                continue;
            }
            let (xc, fc) = if fr < simplex[d].1 {
                let xc = toward(coef.reflect * coef.contract, &worst);
                let fc = eval(&xc);
                (xc, fc)
            } else {
                let xc = toward(-coef.contract, &worst);
                let fc = eval(&xc);
                (xc, fc)
            };
            if fc < fr.min(simplex[d].1) {
                simplex[d] = (xc, fc);
                continue;
            }
            let anchor = simplex[0].0.clone();
            for vertex in simplex.iter_mut().skip(1) {
                let x: Vec<f64> = anchor
                    .iter()
                    .zip(&vertex.0)
                    .map(|(a, v)| a + coef.shrink * (v - a))
                    .collect();
                let fx = eval(&x);
                *vertex = (x, fx);
            }
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if simplex[0].1 <= best_f {
            best_x = simplex[0].0.clone();
            best_f = simplex[0].1;
        }
        if !collapsed {
            break;
        }
        let improvement = start_f - best_f;
        if restarts > 0 && improvement <= config.rel_tol * best_f.abs() + config.abs_tol {
            converged = true;
            break;
        }
        if restarts >= config.max_restarts {
            converged = true;
            break;
        }
        restarts += 1;
    }

    NelderMeadOutcome {
        x: best_x,
        value: best_f,
        iterations,
        evaluations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_bowl() {
        let out = minimize(
            |x| (x[0] - 1.0).powi(2) + 10.0 * (x[1] + 2.0).powi(2) + 3.0,
            &[5.0, 5.0],
            &NelderMeadConfig::default(),
        );
        assert!(out.converged);
        assert!((out.x[0] - 1.0).abs() < 1e-3 && (out.x[1] + 2.0).abs() < 1e-3);
        assert!((out.value - 3.0).abs() < 1e-7);
    }

    #[test]
    fn rosenbrock() {
        let cfg = NelderMeadConfig {
            max_iter: 5000,
            rel_tol: 1e-12,
            abs_tol: 1e-14,
            ..Default::default()
        };
        let out = minimize(
            |x| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2),
            &[-1.2, 1.0],
            &cfg,
        );
        assert!(out.value < 1e-8, "{out:?}");
    }

    #[test]
    fn higher_dimension_sphere() {
        let out = minimize(
            |x| x.iter().enumerate().map(|(i, v)| (v - i as f64).powi(2)).sum::<f64>() + 1.0,
            &[0.0; 8],
            &NelderMeadConfig {
                max_iter: 20_000,
                ..Default::default()
            },
        );
        assert!(out.converged);
        assert!(out.value - 1.0 < 1e-6, "{out:?}");
    }

    #[test]
    fn budget_exhaustion_is_not_convergence() {
        let out = minimize(
            |x| x.iter().map(|v| v * v).sum::<f64>() + 1.0,
            &[3.0; 6],
            &NelderMeadConfig {
                max_iter: 5,
                ..Default::default()
            },
        );
        assert!(!out.converged);
        assert_eq!(out.iterations, 5);
    }

    #[test]
    fn infeasible_region_is_avoided() {
        let out = minimize(
            |x| if x[0] < 0.0 { f64::NAN } else { (x[0] - 0.1).powi(2) + 1.0 },
            &[1.0],
            &NelderMeadConfig::default(),
        );
        assert!((out.x[0] - 0.1).abs() < 1e-3);
    }

    #[test]
    fn never_worse_than_start() {
        let f = |x: &[f64]| (x[0] * 3.0).sin() + x[1].cos() + 0.1 * x[0] * x[0];
        let x0 = [0.3, -0.2];
        let out = minimize(f, &x0, &NelderMeadConfig::default());
        assert!(out.value <= f(&x0));
    }
}
