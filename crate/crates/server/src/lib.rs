//! Bundle server with per-response bandwidth throttling, and the JSON
//! control service that runs progressive sessions on behalf of a UI.

pub mod bundles;
pub mod control;
pub mod error;
pub mod log;
pub mod running;
pub mod throttle;

pub use bundles::{bundle_router, BundleFiles};
pub use control::{ControlConfig, ControlService};
pub use error::ServerError;
pub use log::{LogEntry, RequestLog};
pub use running::RunningServer;
pub use throttle::{parse_rate, RateError, ThrottleConfig, TokenBucket};

use std::net::SocketAddr;

/// Serves `files` on `addr` with the given throttle, recording into `log`.
pub async fn serve(
    files: BundleFiles,
    addr: SocketAddr,
    throttle: ThrottleConfig,
    log: RequestLog,
) -> Result<RunningServer, ServerError> {
    RunningServer::start(bundle_router(files, throttle, log), addr).await
}
