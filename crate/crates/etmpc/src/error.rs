use std::fmt;

/// Crate error type.
#[derive(Debug)]
pub enum Error {
    /// Matrix or vector dimensions do not agree.
    Dimension(String),
    /// A scalar parameter violates its admissible range.
    Parameter(String),
    /// Scenario / config file problem (parse or semantic), with location info
    /// where available.
    Config(String),
    /// Synthesis prerequisite not met (e.g. more than one state delay).
    Synthesis(String),
    /// The SDP solve did not return an optimal solution.
    Solver(String),
    /// Underlying I/O failure.
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension(m) => write!(f, "dimension mismatch: {m}"),
            Error::Parameter(m) => write!(f, "invalid parameter: {m}"),
            Error::Config(m) => write!(f, "config error: {m}"),
            Error::Synthesis(m) => write!(f, "synthesis error: {m}"),
            Error::Solver(m) => write!(f, "solver error: {m}"),
            Error::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}
