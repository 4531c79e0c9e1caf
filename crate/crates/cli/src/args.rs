use std::net::{IpAddr, Ipv4Addr};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use progrnet_core::BitSchedule;

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "progrnet",
    version,
    about = "Progressive transmission of quantized neural network models"
)]
pub struct Cli {
    /// Emit one JSON object per event instead of text.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the seeded demo classifier and write model, weights and test data.
    TrainDemo(TrainDemoArgs),
    /// Quantize portable weights and split them into a staged bundle.
    Convert(ConvertArgs),
    /// Serve a bundle over HTTP with bandwidth throttling.
    Serve(ServeArgs),
    /// Stream a bundle from a server and print one prediction per stage.
    Infer(InferArgs),
    /// Compare singleton and progressive timing and per-stage accuracy.
    Bench(BenchArgs),
    /// Run the JSON session control service used by the demo UI.
    Control(ControlArgs),
    /// Talk to a running control service.
    #[command(subcommand)]
    Session(SessionCommand),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OnOff {
    On,
    Off,
}

impl OnOff {
    pub fn is_on(self) -> bool {
        self == OnOff::On
    }
}

#[derive(Debug, Clone, Args)]
pub struct CodecArgs {
    /// Quantization bit width k.
    #[arg(long, default_value_t = 16)]
    pub bits: u32,
    /// Cumulative bit positions per stage, ending at k [default: 2,4,...,k]
    #[arg(long)]
    pub schedule: Option<String>,
}

impl CodecArgs {
    pub fn bit_schedule(&self) -> Result<BitSchedule, CliError> {
        let sched = match &self.schedule {
            Some(text) => BitSchedule::parse(self.bits, text),
            None => BitSchedule::uniform(self.bits, 2),
        };
        sched.map_err(|e| CliError::Usage(format!("--schedule: {e}")))
    }
}

#[derive(Debug, Clone, Args)]
pub struct ThrottleArgs {
    /// Bandwidth per response: bytes/s, or with a suffix such as 500KB/s or 1MB/s; 0 is unlimited.
    #[arg(long, default_value = "0", value_parser = parse_rate_arg)]
    pub rate: u64,
    /// Token bucket refill interval.
    #[arg(long = "tick-ms", default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub tick_ms: u64,
}

impl ThrottleArgs {
    pub fn config(&self) -> progrnet_server::ThrottleConfig {
        progrnet_server::ThrottleConfig::new(self.rate, std::time::Duration::from_millis(self.tick_ms))
    }
}

fn parse_rate_arg(text: &str) -> Result<u64, String> {
    progrnet_server::parse_rate(text).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Dataset file to take the input from.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Sample index within --dataset.
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    /// A single input tensor as JSON {"shape": [...], "data": [...]}.
    #[arg(long, conflicts_with = "dataset")]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainDemoArgs {
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Directory for model.json, weights.json, weights.bin and dataset.json.
    #[arg(long, short, default_value = "demo")]
    pub output: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct ConvertArgs {
    /// Model description written by train-demo.
    #[arg(long)]
    pub model: PathBuf,
    /// Portable weight index; the binary file sits next to it.
    #[arg(long)]
    pub weights: PathBuf,
    #[command(flatten)]
    pub codec: CodecArgs,
    /// Bundle directory to create.
    #[arg(long, short, default_value = "bundle")]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    /// Bundle directory written by convert.
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
    pub host: IpAddr,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[command(flatten)]
    pub throttle: ThrottleArgs,
    /// Append one JSON line per answered request to this file.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct InferArgs {
    #[arg(long, default_value = "http://127.0.0.1:8080")]
    pub url: String,
    #[command(flatten)]
    pub input: InputArgs,
    /// Overlap inference with the download of the next stage.
    #[arg(long, value_enum, default_value_t = OnOff::On)]
    pub concurrent: OnOff,
    /// Stop after this stage; later stages are never requested.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub stop_after: Option<u64>,
    /// Retries per request on network errors.
    #[arg(long, default_value_t = 3)]
    pub retries: u32,
    /// Artificial latency added to every inference.
    #[arg(long, default_value_t = 0)]
    pub infer_delay_ms: u64,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    /// Labeled data for the per-stage accuracy table.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Original float weights, adds the float row to the accuracy table.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Sample of --dataset used as the timing input.
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    #[arg(long, default_value = "1MB/s", value_parser = parse_rate_arg)]
    pub rate: u64,
    #[arg(long = "tick-ms", default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub tick_ms: u64,
    #[arg(long, default_value_t = 0)]
    pub port: u16,
    /// Artificial latency per inference: milliseconds, or a percentage of
    /// the mean per-stage transfer time such as 25%.
    #[arg(long, default_value = "0", value_parser = parse_delay)]
    pub infer_delay: InferDelay,
    /// Runs per mode; the median total is reported.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub runs: u32,
    /// Where to write the stage accuracy CSV.
    #[arg(long, default_value = "stage_accuracy.csv")]
    pub csv: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InferDelay {
    Millis(f64),
    /// Fraction of the mean per-stage transfer time.
    Fraction(f64),
}

fn parse_delay(text: &str) -> Result<InferDelay, String> {
    let bad = || format!("invalid delay {text:?}: expected milliseconds or a percentage");
    let t = text.trim();
    let (value, pct) = match t.strip_suffix('%') {
        Some(v) => (v, true),
        None => (t.strip_suffix("ms").unwrap_or(t), false),
    };
    let v: f64 = value.trim().parse().map_err(|_| bad())?;
    if !v.is_finite() || v < 0.0 {
        return Err(bad());
    }
    Ok(if pct {
        InferDelay::Fraction(v / 100.0)
    } else {
        InferDelay::Millis(v)
    })
}

#[derive(Debug, Clone, Args)]
pub struct ControlArgs {
    /// Dataset whose samples are offered as demo inputs.
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
    pub host: IpAddr,
    #[arg(long, default_value_t = 8090)]
    pub port: u16,
    /// Number of inputs listed for the UI.
    #[arg(long, default_value_t = 24)]
    pub gallery: usize,
}

#[derive(Debug, Clone, Args)]
pub struct ControlUrl {
    #[arg(long, env = "PROGRNET_CONTROL", default_value = "http://127.0.0.1:8090")]
    pub control_url: String,
}

#[derive(Debug, Subcommand)]
pub enum SessionCommand {
    /// Start a session on the control service.
    Create {
        #[command(flatten)]
        control: ControlUrl,
        /// Bundle server the session downloads from.
        #[arg(long, default_value = "http://127.0.0.1:8080")]
        server_url: String,
        #[arg(long, default_value_t = 0)]
        input_id: usize,
        #[arg(long, value_enum, default_value_t = OnOff::On)]
        concurrent: OnOff,
        #[arg(long, default_value_t = 0)]
        infer_delay_ms: u64,
        #[arg(long)]
        stop_after: Option<usize>,
    },
    /// Print the state of a session.
    Status {
        id: String,
        #[command(flatten)]
        control: ControlUrl,
    },
    Pause {
        id: String,
        #[command(flatten)]
        control: ControlUrl,
    },
    Resume {
        id: String,
        #[command(flatten)]
        control: ControlUrl,
    },
    Stop {
        id: String,
        #[command(flatten)]
        control: ControlUrl,
    },
    /// List the demo inputs.
    Inputs {
        #[command(flatten)]
        control: ControlUrl,
    },
}
