use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("entropy source exhausted before {needed_bits} bits were read")]
    EntropyExhausted { needed_bits: usize },

    #[error("invalid encoder config: {0}")]
    Config(String),

    #[error("non-finite value in encoder output")]
    NonFinite,

    #[error("malformed encoder file: {0}")]
    Format(String),

    #[error("threshold fit failed: {0}")]
    Fit(String),

    #[error("channel transport error: {0}")]
    Transport(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
