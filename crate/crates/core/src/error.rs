use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("node ({i}, {j}) is outside the one-layer ghost halo of a {nx}x{ny} grid")]
    IndexOutOfRange {
        i: isize,
        j: isize,
        nx: usize,
        ny: usize,
    },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("field shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("advection component {axis} = {value} is negative; upwinding is only defined for non-negative speeds")]
    UnsupportedDirection { axis: char, value: f64 },

    #[error("invalid value for `{key}`: {reason}")]
    InvalidParameter { key: String, reason: String },

    #[error("config error at `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("unknown dosing case {0} (expected 1..=4)")]
    UnknownCase(u32),

    #[error("linear solver did not converge in {iterations} iterations (relative residual {residual:e})")]
    SolverFailure { iterations: usize, residual: f64 },

    #[error("fixed-point iteration did not converge in {iterations} sweeps (relative change {residual:e})")]
    PicardFailure { iterations: usize, residual: f64 },

    #[error("non-finite value in field {field} after step")]
    NonFinite { field: &'static str },

    #[error("step starting at t = {t} failed: {source}")]
    StepFailed {
        t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("runs are not comparable: {0}")]
    MismatchedRuns(String),

    #[error("invalid study: {0}")]
    InvalidStudy(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(key: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            key: key.to_string(),
            reason: reason.into(),
        }
    }

    pub(crate) fn config(key: &str, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.to_string(),
            reason: reason.into(),
        }
    }

    /// Time at which a numerical failure happened, if one is attached.
    pub fn failure_time(&self) -> Option<f64> {
        match self {
            Error::StepFailed { t, .. } => Some(*t),
            _ => None,
        }
    }

    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config { .. }
                | Error::InvalidParameter { .. }
                | Error::InvalidGrid(_)
                | Error::UnknownCase(_)
                | Error::UnsupportedDirection { .. }
        )
    }
}
