use thiserror::Error;

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("unknown owner {0}")]
    NotFound(String),
    #[error("unknown dataset {0}")]
    UnknownDataset(String),
    #[error("challenge dataset exhausted: {requested} requested, {remaining} unused")]
    Exhausted { requested: usize, remaining: usize },
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error("log line {line} is corrupt: {reason}")]
    Corrupt { line: usize, reason: String },
    #[error("injected failure after the burn record was synced")]
    InjectedCrash,
    #[error(transparent)]
    Core(#[from] keyprint_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
