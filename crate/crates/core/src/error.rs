use thiserror::Error;

/// Errors produced by the simulator.
///
/// Variants fall into two families: configuration/contract violations
/// (caller passed something inconsistent) and numerical failures (the
/// computation itself could not proceed). [`Error::is_numerical`] tells
/// them apart, which the command-line front-end maps to exit codes.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error(
        "zero-probability branch: measured weight {weight:e} on mode {mode} is below {threshold:e}"
    )]
    ZeroProbability {
        mode: usize,
        weight: f64,
        threshold: f64,
    },

    #[error("quadrature failed to converge after {refinements} refinements (last change {last_change:e}, tolerance {tolerance:e})")]
    QuadratureDiverged {
        refinements: usize,
        last_change: f64,
        tolerance: f64,
    },

    #[error("Krylov exponential did not converge: {0}")]
    Krylov(String),

    #[error("training failed: {0}")]
    Training(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::ZeroProbability { .. }
                | Error::QuadratureDiverged { .. }
                | Error::Krylov(_)
                | Error::Training(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}
