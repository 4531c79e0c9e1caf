use progrnet_client::ClientError;
use progrnet_core::{FormatError, InferenceError};
use progrnet_server::ServerError;

/// Failure of a subcommand, classified by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Network(String),
    #[error("{0}")]
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Io(_) => 2,
            CliError::Network(_) => 3,
            CliError::Verification(_) => 4,
        }
    }

    pub fn io(context: impl std::fmt::Display, e: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{context}: {e}"))
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Local file problems are I/O errors; integrity problems are verification
/// failures.
impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        match e {
            FormatError::Checksum { .. } | FormatError::Length { .. } => CliError::Verification(e.to_string()),
            FormatError::Codec(_) => CliError::Usage(e.to_string()),
            _ => CliError::Io(e.to_string()),
        }
    }
}

impl From<InferenceError> for CliError {
    fn from(e: InferenceError) -> Self {
        match e {
            InferenceError::Format(f) => f.into(),
            InferenceError::InputShape { .. } | InferenceError::Config(_) => CliError::Usage(e.to_string()),
            InferenceError::TargetNotReached { .. } => CliError::Verification(e.to_string()),
            _ => CliError::Io(e.to_string()),
        }
    }
}

/// Anything the server sent that fails validation is a verification failure.
/// A 4xx answer means the request itself was wrong.
impl From<ClientError> for CliError {
    fn from(e: ClientError) -> Self {
        let message = e.to_string();
        match e {
            ClientError::Status { status, .. } if status < 500 => CliError::Usage(message),
            ClientError::Http { .. } | ClientError::Status { .. } => CliError::Network(message),
            ClientError::Stage { .. } | ClientError::Format(_) => CliError::Verification(message),
            ClientError::Inference {
                source: InferenceError::InputShape { .. },
                ..
            }
            | ClientError::InvalidTransition { .. } => CliError::Usage(message),
            ClientError::Inference { .. } => CliError::Verification(message),
            ClientError::Stopped | ClientError::Join(_) => CliError::Io(message),
        }
    }
}

impl From<ServerError> for CliError {
    fn from(e: ServerError) -> Self {
        match e {
            ServerError::Bundle(f) => f.into(),
            other => CliError::Io(other.to_string()),
        }
    }
}
