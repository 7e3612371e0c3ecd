//! Coxian phase-type survival models in mixture-of-hypoexponentials form.

pub mod benchmark;
pub mod cli;
pub mod covariates;
pub mod error;
pub mod estimation;
pub mod hypoexp;
pub mod matrix;
pub mod mixture;
pub mod multi_exit;
pub mod optim;
pub mod params;
pub mod pipeline;
pub mod sampler;
pub mod simulate;

pub use error::{Error, Result};
pub use params::{CoxianParams, MixtureParams, MultiExitMixtureParams, TwoExitRates};
