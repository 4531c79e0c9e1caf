//! Client side of progressive model transmission: downloading bundle stages
//! from a bundle server while running intermediate models, plus a small
//! client for the session control API.

pub mod api;
pub mod control;
pub mod error;
pub mod http;
pub mod session;

pub use control::ControlClient;
pub use error::ClientError;
pub use http::BundleClient;
pub use session::{
    singleton_session, ProgressiveSession, SessionController, SessionOptions, SessionState, SessionStatus,
    SessionSummary, SingletonResult, StageReport, StageResult, StageTiming,
};
