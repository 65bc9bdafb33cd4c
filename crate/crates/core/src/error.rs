use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain where a model is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// Inconsistent or invalid user configuration.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("grid resolution error: step {step} GHz exceeds {limit} GHz")]
    Resolution { step: f64, limit: f64 },

    #[error("detuning {nu} GHz outside tabulated range [{lo}, {hi}] GHz")]
    Extrapolation { nu: f64, lo: f64, hi: f64 },

    #[error("no usable set point: {0}")]
    NoSetPoint(String),

    #[error("fit did not converge after {iterations} iterations (cost {cost:.3e}): {reason}")]
    Fit {
        iterations: usize,
        cost: f64,
        reason: String,
    },

    #[error("rate {rate} cps exceeds thinning bound {bound} cps at t = {t} s")]
    BoundViolation { rate: f64, bound: f64, t: f64 },

    #[error("visibility undefined: perpendicular peak area is zero")]
    UndefinedVisibility,

    #[error("no solution: {0}")]
    NoSolution(String),

    #[error("inconclusive: {0}")]
    Inconclusive(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Configuration-class errors are the user's to fix; everything else is a
    /// runtime or physics failure. The CLI maps these onto exit codes 2 and 3.
    pub fn is_configuration(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Parse { .. } | Error::Resolution { .. }
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
