use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error, line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("underdetermined fit: need at least {needed} points, got {got}")]
    Underdetermined { needed: usize, got: usize },

    #[error("rank-deficient design matrix")]
    RankDeficient,

    #[error("t = {t} lies outside the model domain [{t_min}, {t_max}]")]
    OutOfDomain { t: f64, t_min: f64, t_max: f64 },

    #[error("model singularity: denominator is non-positive at t = {t}")]
    Singularity { t: f64 },

    #[error("fitted denominator is non-positive at t = {t}")]
    Positivity { t: f64 },

    #[error("fit did not converge: {0}")]
    NotConverged(String),

    #[error("bootstrap unstable: {skipped} of {total} resamples skipped")]
    BootstrapUnstable { skipped: usize, total: usize },

    #[error("gaussian noise redraw exhausted at t = {t}")]
    RedrawExhausted { t: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) => 2,
            Error::Parse { .. }
            | Error::Validation(_)
            | Error::Precondition(_)
            | Error::Underdetermined { .. }
            | Error::OutOfDomain { .. }
            | Error::Json(_) => 3,
            Error::RankDeficient
            | Error::Singularity { .. }
            | Error::Positivity { .. }
            | Error::NotConverged(_)
            | Error::BootstrapUnstable { .. }
            | Error::RedrawExhausted { .. } => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
