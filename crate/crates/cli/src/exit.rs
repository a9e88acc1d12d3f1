use std::fmt;

use qumode_core::Error;

/// Failure of a command, classified by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Invalid or inconsistent input (exit 2).
    Config(String),
    /// The computation itself failed (exit 3).
    Numerical(String),
    /// Filesystem trouble (exit 1).
    Io(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        if e.is_numerical() || matches!(e, Error::Domain(_)) {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn core_errors_map_to_codes() {
        assert_eq!(CliError::from(Error::Config("x".into())).code(), 2);
        assert_eq!(CliError::from(Error::Contract("x".into())).code(), 2);
        assert_eq!(CliError::from(Error::Krylov("x".into())).code(), 3);
        assert_eq!(CliError::from(Error::Domain("x".into())).code(), 3);
        let zp = Error::ZeroProbability {
            mode: 1,
            weight: 0.0,
            threshold: 1e-14,
        };
        assert_eq!(CliError::from(zp).code(), 3);
    }
}
