use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::estimation::data::FitData;
use crate::estimation::fit::{fit, FitConfig, FitResult, PhaseRange};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub phases: usize,
    pub fit: Option<FitResult>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// Phase count with the lowest AIC.
    pub aic_best: Option<usize>,
    /// Phase count with the lowest BIC.
    pub bic_best: Option<usize>,
    pub stopped_early: bool,
}

impl SweepTable {
    pub fn fit_for(&self, phases: usize) -> Option<&FitResult> {
        self.rows
            .iter()
            .find(|r| r.phases == phases)
            .and_then(|r| r.fit.as_ref())
    }

    pub fn bic_selected(&self) -> Option<&FitResult> {
        self.bic_best.and_then(|n| self.fit_for(n))
    }

    pub fn aic_selected(&self) -> Option<&FitResult> {
        self.aic_best.and_then(|n| self.fit_for(n))
    }
}

/// Fits every phase count in `config.phase_range` with [`fit`].
pub fn phase_sweep(data: &FitData, config: &FitConfig) -> SweepTable {
    phase_sweep_with(config.phase_range, config.early_stop, |n| fit(data, n, config))
}

/// Runs `fit_one` across `range`. A failed row is recorded and skipped. With
/// `early_stop`, the sweep ends after two consecutive rows whose AIC and BIC
/// both exceed the best seen so far.
pub fn phase_sweep_with<F>(range: PhaseRange, early_stop: bool, mut fit_one: F) -> SweepTable
where
    F: FnMut(usize) -> Result<FitResult>,
{
    let mut rows = Vec::new();
    let mut best_aic = f64::INFINITY;
    let mut best_bic = f64::INFINITY;
    let mut worse_streak = 0;
    let mut stopped_early = false;
    for n in range.min..=range.max {
        match fit_one(n) {
            Ok(r) => {
                info!(
                    "{n} phases: loglik {:.4}, AIC {:.4}, BIC {:.4}",
                    r.loglik, r.aic, r.bic
                );
                if r.aic > best_aic && r.bic > best_bic {
                    worse_streak += 1;
                } else {
                    worse_streak = 0;
                }
                best_aic = best_aic.min(r.aic);
                best_bic = best_bic.min(r.bic);
                rows.push(SweepRow {
                    phases: n,
                    fit: Some(r),
                    error: None,
                });
            }
            Err(e) => {
                warn!("{n} phases: {e}");
                rows.push(SweepRow {
                    phases: n,
                    fit: None,
                    error: Some(e.to_string()),
                });
            }
        }
        if early_stop && worse_streak >= 2 && n < range.max {
            stopped_early = true;
            break;
        }
    }
    let argmin = |key: fn(&FitResult) -> f64| {
        rows.iter()
            .filter_map(|r| r.fit.as_ref().map(|f| (r.phases, key(f))))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(n, _)| n)
    };
    let aic_best = argmin(|f| f.aic);
    let bic_best = argmin(|f| f.bic);
    SweepTable {
        rows,
        aic_best,
        bic_best,
        stopped_early,
    }
}
