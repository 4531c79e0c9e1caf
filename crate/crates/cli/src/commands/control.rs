use std::net::SocketAddr;

use progrnet_server::{ControlConfig, ControlService, RunningServer};
use serde::Serialize;

use crate::args::ControlArgs;
use crate::commands::{ctrl_c, read_dataset};
use crate::error::CliError;
use crate::output::Output;

#[derive(Debug, Serialize)]
struct Listening {
    url: String,
    inputs: usize,
}

pub async fn run(args: &ControlArgs, out: &mut Output<'_>) -> Result<(), CliError> {
    let dataset = read_dataset(&args.dataset)?;
    let inputs = dataset.len();
    let config = ControlConfig {
        gallery: args.gallery,
        ..Default::default()
    };
    let service = ControlService::new(dataset, config);
    let server = RunningServer::start(service.router(), SocketAddr::new(args.host, args.port)).await?;
    let listening = Listening {
        url: server.url(),
        inputs,
    };
    out.event("listening", &listening, || {
        format!("control service on {} with {} inputs", listening.url, listening.inputs)
    })?;
    ctrl_c().await?;
    server.shutdown().await;
    Ok(())
}
