//! Maximum-likelihood fitting, standard errors and phase-count selection.

mod data;
mod fit;
mod kernel;
mod likelihood;
mod select;
mod stderr;

pub use data::{CovariateMatrix, FitData};
pub use fit::{
    aic, bic, check_rank, conditioning_constant, fit, fit_conditional, fit_standard, fit_two_exit,
    fit_with_covariates, CovariateModel, FitConfig, FitResult, FittedDensity, ModelForm,
    PhaseRange, StartSummary, SPARSE_LEVEL_COUNT,
};
pub use likelihood::DensityForm;
pub use select::{phase_sweep, phase_sweep_with, SweepRow, SweepTable};
pub use stderr::{standard_errors, StdErrors, BOUNDARY_WEIGHT};
