use progrnet_client::api::CreateSession;
use progrnet_client::{ControlClient, SessionState};
use serde::Serialize;

use crate::args::SessionCommand;
use crate::error::CliError;
use crate::output::Output;

#[derive(Debug, Serialize)]
struct Created {
    id: String,
}

pub async fn run(command: &SessionCommand, out: &mut Output<'_>) -> Result<(), CliError> {
    match command {
        SessionCommand::Create {
            control,
            server_url,
            input_id,
            concurrent,
            infer_delay_ms,
            stop_after,
        } => {
            let request = CreateSession {
                server_url: server_url.clone(),
                input_id: *input_id,
                concurrent: concurrent.is_on(),
                infer_delay_ms: *infer_delay_ms,
                max_stages: *stop_after,
            };
            let id = ControlClient::new(&control.control_url).create(&request).await?;
            let created = Created { id };
            out.event("created", &created, || created.id.clone())
        }
        SessionCommand::Status { id, control } => {
            let state = ControlClient::new(&control.control_url).state(id).await?;
            print_state(&state, out)
        }
        SessionCommand::Pause { id, control } => {
            let state = ControlClient::new(&control.control_url).pause(id).await?;
            print_state(&state, out)
        }
        SessionCommand::Resume { id, control } => {
            let state = ControlClient::new(&control.control_url).resume(id).await?;
            print_state(&state, out)
        }
        SessionCommand::Stop { id, control } => {
            let state = ControlClient::new(&control.control_url).stop(id).await?;
            print_state(&state, out)
        }
        SessionCommand::Inputs { control } => {
            for input in ControlClient::new(&control.control_url).inputs().await? {
                out.event("input", &input, || {
                    format!(
                        "input {:>4}  label {:>3}  shape {:?}",
                        input.id, input.label, input.shape
                    )
                })?;
            }
            Ok(())
        }
    }
}

fn print_state(state: &SessionState, out: &mut Output<'_>) -> Result<(), CliError> {
    out.event("session", state, || {
        let mut text = format!(
            "session {}  {}  {}/{} stages  {} bytes",
            state.id, state.status, state.stages_received, state.total_stages, state.bytes_received
        );
        if let Some(e) = &state.error {
            text.push_str(&format!("\nerror: {e}"));
        }
        for (report, p) in state.predictions() {
            text.push_str(&format!(
                "\nstage {:>2}  bits {:>2}  class {:>3}  confidence {:.4}",
                report.stage,
                report.bits,
                p.class,
                p.confidence()
            ));
        }
        text
    })
}
