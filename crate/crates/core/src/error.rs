//! Error type shared by every solver and verification routine.

use thiserror::Error;

/// Errors reported by the numerical core.
///
/// Variants are grouped by who is at fault: the caller (`ParameterDomain`,
/// `Validation`, `Configuration`, `Capability`, `SingularKernel`,
/// `Hypothesis`), the numerics (`Regime`, `Accuracy`, `NonContraction`,
/// `InsufficientData`), or the environment (`Io`, `Parse`).
#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter out of domain: {0}")]
    ParameterDomain(String),

    #[error("evaluation regime failed: {0}")]
    Regime(String),

    #[error("kernel is singular: {0}")]
    SingularKernel(String),

    #[error("invalid spectral data at index {index}: {reason}")]
    Validation { index: usize, reason: String },

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("capability not available: {0}")]
    Capability(String),

    #[error("accuracy target missed at mode {mode}, node {node}: {reason}")]
    Accuracy { mode: usize, node: usize, reason: String },

    #[error("fixed-point iteration did not contract (rate estimate {rate:.3e}) after {iterations} iterations")]
    NonContraction { rate: f64, iterations: usize },

    #[error("hypothesis not satisfied: {0}")]
    Hypothesis(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::ParameterDomain(msg.into())
    }

    /// True for errors caused by invalid input rather than numerical failure.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::ParameterDomain(_)
                | Error::Validation { .. }
                | Error::Configuration(_)
                | Error::Capability(_)
                | Error::SingularKernel(_)
                | Error::Hypothesis(_)
                | Error::Parse(_)
        )
    }
}
