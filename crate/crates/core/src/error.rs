use thiserror::Error;

/// Errors raised by the channel, beam-domain, estimator and harness layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration at `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid covariance: {0}")]
    Covariance(String),

    #[error("degenerate beam basis: delays {delays:?} are not resolvable (singular-value ratio {ratio:.3e})")]
    DegenerateBasis { delays: Vec<usize>, ratio: f64 },

    #[error("degenerate signature for beam {beam}: zero norm")]
    DegenerateSignature { beam: usize },

    #[error("degenerate scenario: {0}")]
    DegenerateScenario(String),

    #[error("snapshot parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
