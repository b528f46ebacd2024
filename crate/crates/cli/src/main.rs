//! `belief`: fit, analyze and simulate record files, or host a study.

mod cmd;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "belief", version, about = "Belief-update study workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a Beta distribution to every response in a records file.
    Fit(FitArgs),
    /// Analyze fitted records against the normative posterior.
    Analyze(AnalyzeArgs),
    /// Generate synthetic participant records.
    Simulate(SimulateArgs),
    /// Host a study over HTTP until interrupted.
    Serve(ServeArgs),
}

/// Where observed data and fit settings come from.
#[derive(Args, Clone, Default)]
pub struct StudyArgs {
    /// Study config whose datasets and fit settings are used.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Observed data override, `NAME=successes,failures`. Repeatable.
    #[arg(long = "dataset", value_name = "NAME=S,F")]
    pub datasets: Vec<String>,
}

#[derive(Args)]
pub struct IoArgs {
    /// Input records file, `-` for stdin.
    pub input: PathBuf,
    /// Input format; guessed from the extension by default.
    #[arg(long, value_name = "jsonl|csv")]
    pub format: Option<String>,
    /// Output file; stdout by default.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Drop rows that fail validation instead of exiting.
    #[arg(long)]
    pub skip_invalid: bool,
}

#[derive(Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub io: IoArgs,
    #[command(flatten)]
    pub study: StudyArgs,
    /// Output format; defaults to the output extension, then the input format.
    #[arg(long, value_name = "jsonl|csv")]
    pub out_format: Option<String>,
    /// Replace degenerate responses with a peaked Beta of this concentration
    /// instead of the uniform.
    #[arg(long, value_name = "C")]
    pub peaked: Option<f64>,
}

#[derive(Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub io: IoArgs,
    #[command(flatten)]
    pub study: StudyArgs,
    /// Bootstrap the aggregate log KLD. Defaults to on when the config
    /// defines a bootstrap.
    #[arg(long, num_args = 0..=1, default_missing_value = "true", value_name = "BOOL")]
    pub bootstrap: Option<bool>,
    /// Fit the log-KLD regression. Defaults to on for factorial configs.
    #[arg(long, num_args = 0..=1, default_missing_value = "true", value_name = "BOOL")]
    pub regress: Option<bool>,
    /// Aggregate log KLD using only the first n samples, e.g. `3,4,5`.
    #[arg(long, value_delimiter = ',', value_name = "N,...")]
    pub first_n: Option<Vec<usize>>,
    /// Seed for the bootstrap and the sampler; random and printed if omitted.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Keep only this dataset.
    #[arg(long)]
    pub only_dataset: Option<String>,
    /// Keep only this elicitation format.
    #[arg(long)]
    pub only_format: Option<String>,
    #[arg(long, value_name = "BOOL")]
    pub uncertainty: Option<bool>,
    #[arg(long, value_name = "BOOL")]
    pub elicitation: Option<bool>,
    /// `true` (default), `false` or `any`.
    #[arg(long, value_name = "true|false|any", default_value = "true")]
    pub attention_pass: String,
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Number of agents.
    #[arg(long, short = 'n')]
    pub agents: usize,
    /// `exact` or `sample:K`.
    #[arg(long, default_value = "exact")]
    pub kind: String,
    /// Agent prior, `alpha,beta`.
    #[arg(long, value_name = "A,B")]
    pub prior: String,
    /// Observed data, `successes,failures`; the dataset's data by default.
    #[arg(long, value_name = "S,F")]
    pub data: Option<String>,
    #[arg(long, default_value = "tech_small")]
    pub dataset: String,
    /// Elicitation format.
    #[arg(long, default_value = "graphical_sample")]
    pub format: String,
    /// Mark the records as shown the animated-uncertainty stimulus.
    #[arg(long)]
    pub uncertainty: bool,
    /// Skip the prior elicitation.
    #[arg(long)]
    pub no_elicitation: bool,
    /// Random and printed if omitted.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[arg(long, value_name = "jsonl|csv")]
    pub out_format: Option<String>,
}

#[derive(Args)]
pub struct ServeArgs {
    /// Study to create on startup; reused if it already exists.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "belief-data")]
    pub data_dir: PathBuf,
    /// Port on 127.0.0.1; `--bind` takes precedence.
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long, value_name = "ADDR")]
    pub bind: Option<std::net::SocketAddr>,
    /// Static elicitation UI bundle to serve at `/`.
    #[arg(long)]
    pub ui_dir: Option<PathBuf>,
    /// Seed for studies created without one.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(a) => cmd::fit(a),
        Command::Analyze(a) => cmd::analyze(a),
        Command::Simulate(a) => cmd::simulate(a),
        Command::Serve(a) => cmd::serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
