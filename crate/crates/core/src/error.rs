use thiserror::Error;

/// Errors raised by the optimization toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Invalid configuration, budgets or problem names.
    #[error("configuration error: {0}")]
    Config(String),
    /// Malformed data: dimension mismatches, non-finite observations.
    #[error("data error: {0}")]
    Data(String),
    /// A factorization failed even after jitter escalation.
    #[error("numerical error: {0}")]
    Numerical(String),
    /// Candidate with zero predictive variance and zero noise.
    #[error("degenerate candidate: zero predictive variance and zero noise")]
    DegenerateCandidate,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
