use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("phase {phase} cannot be left: lambda + mu = 0")]
    UnleavablePhase { phase: usize },

    #[error("absorption probabilities sum to {sum}, outside the 1e-10 renormalization band")]
    ProbabilityMass { sum: f64 },

    #[error("(theta, pi) is not a Coxian: recurrence yields lambda_{phase} = {value:e}")]
    NotRepresentable { phase: usize, value: f64 },

    #[error("invalid evaluation time {0}")]
    InvalidTime(f64),

    #[error("density {value:e} at t = {t} is negative beyond rounding (ill-conditioned rates)")]
    NegativeDensity { t: f64, value: f64 },

    #[error("numeric range error: {0}")]
    NumericRange(String),

    #[error("density underflows to zero at record {index} (t = {t})")]
    ZeroDensity { index: usize, t: f64 },

    #[error("invalid station chain: {0}")]
    InvalidChain(String),

    #[error("station index {index} out of range for a chain of {len} stations")]
    StationOutOfRange { index: usize, len: usize },

    #[error("record count mismatch: {previous} previous-station vs {current} current-station records")]
    LengthMismatch { previous: usize, current: usize },

    #[error("empty data: {0}")]
    EmptyData(String),

    #[error("covariate matrix with intercept has rank {rank} < {columns} columns")]
    RankDeficient { rank: usize, columns: usize },

    #[error("observed information is not positive definite (eigenvalues in [{min_eigenvalue:e}, {max_eigenvalue:e}])")]
    NotPositiveDefinite {
        min_eigenvalue: f64,
        max_eigenvalue: f64,
    },

    #[error("ingestion failed: {0}")]
    Ingest(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{0}")]
    Io(#[from] std::io::Error),

    #[error("{0}")]
    Csv(#[from] csv::Error),

    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable numeric code, shared by the CLI exit status and the C API.
    pub fn code(&self) -> i32 {
        match self {
            Error::InvalidParams(_)
            | Error::UnleavablePhase { .. }
            | Error::ProbabilityMass { .. }
            | Error::NotRepresentable { .. }
            | Error::InvalidTime(_)
            | Error::InvalidChain(_)
            | Error::StationOutOfRange { .. } => 2,
            Error::NegativeDensity { .. } | Error::NumericRange(_) | Error::ZeroDensity { .. } => 3,
            Error::LengthMismatch { .. }
            | Error::EmptyData(_)
            | Error::RankDeficient { .. }
            | Error::NotPositiveDefinite { .. } => 4,
            Error::Ingest(_) | Error::Csv(_) => 5,
            Error::Config(_) | Error::Json(_) => 6,
            Error::Io(_) => 7,
        }
    }
}
