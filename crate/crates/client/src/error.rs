use progrnet_core::{FormatError, InferenceError};

use crate::session::SessionStatus;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("request to {url} failed: {source}")]
    Http {
        url: String,
        #[source]
        source: reqwest::Error,
    },
    #[error("{url} answered {status} {body}")]
    Status { url: String, status: u16, body: String },
    #[error("stage {stage}: {source}")]
    Stage {
        stage: usize,
        #[source]
        source: FormatError,
    },
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("inference on stage {stage} failed: {source}")]
    Inference {
        stage: usize,
        #[source]
        source: InferenceError,
    },
    #[error("cannot {action} a session that is {from}")]
    InvalidTransition { action: &'static str, from: SessionStatus },
    #[error("session stopped")]
    Stopped,
    #[error("worker task failed: {0}")]
    Join(String),
}

impl ClientError {
    /// Transport failures that are worth retrying from the start of a stage.
    pub fn is_retriable(&self) -> bool {
        match self {
            ClientError::Http { .. } => true,
            ClientError::Status { status, .. } => *status >= 500,
            _ => false,
        }
    }

    /// Network-level failure, as opposed to data or usage problems.
    pub fn is_network(&self) -> bool {
        matches!(self, ClientError::Http { .. } | ClientError::Status { .. })
    }

    pub fn is_verification(&self) -> bool {
        matches!(
            self,
            ClientError::Stage {
                source: FormatError::Checksum { .. } | FormatError::Length { .. },
                ..
            }
        )
    }
}
