use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input violated a documented precondition.
    #[error("invalid input: {0}")]
    Validation(String),

    /// A bracketing search ran out of expansions before a sign change was found.
    #[error("root bracket not found after {expansions} expansions")]
    BracketFailure { expansions: usize },

    #[error("ODE step size underflow at t = {t}")]
    StepUnderflow { t: f64 },

    #[error("quadrature did not converge on [{lo}, {hi}] (error estimate {err:e})")]
    QuadratureFailure { lo: f64, hi: f64, err: f64 },

    /// Argument lies outside the domain of a function (e.g. `K` outside `(0, theta0)`).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("integral of the path is zero; the estimator is undefined")]
    ZeroIntegral,

    #[error("statistic is not computable: {0}")]
    NotComputable(String),

    /// A numerical fault that valid inputs should never trigger.
    #[error("internal numeric fault: {0}")]
    NumericFault(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Numeric faults (as opposed to bad input) map to a distinct CLI exit status.
    pub fn is_numeric_fault(&self) -> bool {
        matches!(
            self,
            Error::BracketFailure { .. }
                | Error::StepUnderflow { .. }
                | Error::QuadratureFailure { .. }
                | Error::NumericFault(_)
        )
    }
}
