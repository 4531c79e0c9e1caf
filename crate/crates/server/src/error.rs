use std::net::SocketAddr;

use progrnet_core::FormatError;

#[derive(Debug, thiserror::Error)]
pub enum ServerError {
    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("invalid bundle: {0}")]
    Bundle(#[from] FormatError),
}

impl ServerError {
    pub fn is_io(&self) -> bool {
        match self {
            ServerError::Bind { .. } | ServerError::Io(_) => true,
            ServerError::Bundle(FormatError::Io(_)) => true,
            ServerError::Bundle(_) => false,
        }
    }
}
