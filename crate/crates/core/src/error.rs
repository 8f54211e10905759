use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A distribution with zero spread where a positive spread is required.
    #[error("degenerate distribution: {0}")]
    Degenerate(String),

    #[error("no sign change on [{lo}, {hi}]")]
    NoBracket { lo: f64, hi: f64 },

    #[error("lines do not cross: {0}")]
    NoCrossing(String),

    #[error("quadrature did not converge (relative change {change:e} after {panels} panels)")]
    Quadrature { panels: usize, change: f64 },

    #[error("no unmangled worlds: {0}")]
    EmptyUnmangled(String),

    #[error("step too large: dt*|H| = {product} exceeds {limit}")]
    Stability { product: f64, limit: f64 },

    #[error("indeterminate: {0}")]
    Indeterminate(String),

    #[error("classes with label {label} disagree on size ({a} vs {b})")]
    InconsistentMerge { label: String, a: f64, b: f64 },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of a numerical procedure, as opposed to bad input
    /// or an empty result domain.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Degenerate(_)
                | Error::NoBracket { .. }
                | Error::Quadrature { .. }
                | Error::Stability { .. }
                | Error::Indeterminate(_)
                | Error::InconsistentMerge { .. }
        )
    }

    pub fn is_empty_domain(&self) -> bool {
        matches!(self, Error::NoCrossing(_) | Error::EmptyUnmangled(_))
    }
}
