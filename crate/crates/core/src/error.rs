use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of a physical formula.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("size mismatch: {0}")]
    Size(String),

    /// The training sequence does not make the channel identifiable.
    #[error("channel not estimable: {0}")]
    Estimability(String),

    #[error("equalizer error: {0}")]
    Equalizer(String),

    #[error("no training sequence satisfies the constraints: {0}")]
    Constraint(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("exhaustive search over 2^{m} hypotheses exceeds the limit 2^{limit}")]
    Complexity { m: usize, limit: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
