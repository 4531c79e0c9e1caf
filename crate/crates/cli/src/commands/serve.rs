use std::net::SocketAddr;

use progrnet_server::{serve, BundleFiles, RequestLog};
use serde::Serialize;

use crate::args::ServeArgs;
use crate::commands::ctrl_c;
use crate::error::CliError;
use crate::output::Output;

#[derive(Debug, Serialize)]
struct Listening {
    url: String,
    stages: usize,
    payload_bytes: u64,
    rate: u64,
}

pub async fn run(args: &ServeArgs, out: &mut Output<'_>) -> Result<(), CliError> {
    let files = BundleFiles::from_dir(&args.bundle)?;
    let log = match &args.log {
        Some(path) => RequestLog::with_file(path).map_err(|e| CliError::io(path.display(), e))?,
        None => RequestLog::new(),
    };
    let info = (files.stage_count(), files.payload_bytes());
    let server = serve(
        files,
        SocketAddr::new(args.host, args.port),
        args.throttle.config(),
        log,
    )
    .await?;
    let listening = Listening {
        url: server.url(),
        stages: info.0,
        payload_bytes: info.1,
        rate: args.throttle.rate,
    };
    out.event("listening", &listening, || {
        let rate = match listening.rate {
            0 => "unlimited".to_string(),
            r => format!("{r} bytes/s"),
        };
        format!(
            "serving {} stages ({} bytes) on {}, rate {rate}",
            listening.stages, listening.payload_bytes, listening.url
        )
    })?;
    ctrl_c().await?;
    server.shutdown().await;
    Ok(())
}
