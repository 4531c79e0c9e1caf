//! The `progrnet` command line: training the demo model, converting weights
//! to staged bundles, serving them, streaming inference and benchmarks.

pub mod args;
pub mod commands;
pub mod error;
pub mod output;

use std::io::Write;

pub use args::Cli;
pub use error::CliError;
pub use output::Output;

use args::Command;

pub async fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let mut out = Output::new(cli.json, out);
    let out = &mut out;
    match &cli.command {
        Command::TrainDemo(a) => commands::train::run(a, out).map(drop),
        Command::Convert(a) => commands::convert::run(a, out).map(drop),
        Command::Serve(a) => commands::serve::run(a, out).await,
        Command::Infer(a) => commands::infer::run(a, out).await.map(drop),
        Command::Bench(a) => commands::bench::run(a, out).await.map(drop),
        Command::Control(a) => commands::control::run(a, out).await,
        Command::Session(c) => commands::session::run(c, out).await,
    }
}
