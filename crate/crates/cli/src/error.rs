use vandal_client::ClientError;
use vandal_core::api::ErrorKind;

/// A failure with the exit code it maps to: 2 configuration, 3 data,
/// 4 upstream or service.
#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        CliError { kind, message: message.into() }
    }

    pub fn config(message: impl Into<String>) -> Self {
        CliError::new(ErrorKind::InvalidRequest, message)
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError::new(ErrorKind::InvalidData, message)
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }
}

impl From<ClientError> for CliError {
    fn from(e: ClientError) -> Self {
        CliError::new(e.kind(), e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::data(e.to_string())
    }
}
