use hotinfer::HotError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, unreadable or invalid inputs.
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

/// Input and configuration problems are usage errors; numerical failures
/// are runtime errors.
pub fn classify(e: HotError) -> CliError {
    let msg = e.to_string();
    match e {
        HotError::DimensionMismatch(_)
        | HotError::NonFiniteInput { .. }
        | HotError::DegenerateColumn { .. }
        | HotError::DegenerateResponse
        | HotError::MalformedInput(_)
        | HotError::InvalidAlpha(_)
        | HotError::InvalidPattern(_)
        | HotError::InvalidConfig(_)
        | HotError::IndexOutOfRange { .. }
        | HotError::Csv(_)
        | HotError::Json(_) => CliError::Usage(msg),
        HotError::Io(_) => CliError::Usage(msg),
        _ => CliError::Runtime(msg),
    }
}
