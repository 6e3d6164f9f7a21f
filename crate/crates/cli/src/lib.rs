//! The `rhe` command line: configuration, head encryption, inference, benchmarking, shadow
//! generation and ROC evaluation.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::error::{ContextKind, ContextValue, ErrorKind};
use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod error;

pub use commands::{read_features, resolve_seed, write_logits_csv, TEST_MODE_ENV};
pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "rhe", version, about = "Encrypted head inference and reconstruction-robustness tooling")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Choose CKKS parameters for a head and optionally generate keys.
    Configure(ConfigureArgs),
    /// Encrypt a plaintext head under public keys.
    EncryptHead(EncryptHeadArgs),
    /// Run an encrypted head on plaintext features and decrypt the logits.
    Infer(InferArgs),
    /// Time heads and compare against the calibrated cost model.
    Bench(BenchArgs),
    /// Measure primitive costs for a parameter set.
    Calibrate(CalibrateArgs),
    /// Train shadow heads on draws from a prior.
    ShadowGen(ShadowGenArgs),
    /// Score the reconstruction attack on shadow heads and write the ROC curve.
    EvalRoc(EvalRocArgs),
    /// Read one operating point off a ROC curve.
    TprAtFpr(TprAtFprArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Backend {
    Ckks,
    Sim,
}

impl From<Backend> for he_core::BackendKind {
    fn from(b: Backend) -> Self {
        match b {
            Backend::Ckks => he_core::BackendKind::Ckks,
            Backend::Sim => he_core::BackendKind::Simulator,
        }
    }
}

#[derive(Debug, Args)]
pub struct ConfigureArgs {
    /// Layer widths, input first, e.g. 2048,128,16.
    #[arg(long)]
    pub dims: String,
    #[arg(long, default_value_t = 128)]
    pub security: u32,
    #[arg(long = "exp-bits")]
    pub exp_bits: u32,
    #[arg(long = "frac-bits")]
    pub frac_bits: u32,
    #[arg(long, value_enum, default_value_t = Backend::Ckks)]
    pub backend: Backend,
    #[arg(long)]
    pub out: PathBuf,
    /// Where to write the public key bundle.
    #[arg(long)]
    pub keys: Option<PathBuf>,
    #[arg(long = "secret-key")]
    pub secret_key: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EncryptHeadArgs {
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long)]
    pub head: PathBuf,
    #[arg(long)]
    pub keys: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub head: PathBuf,
    /// CSV without header, one feature vector per row.
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long = "secret-key")]
    pub secret_key: PathBuf,
    /// Public key bundle holding the rotation keys.
    #[arg(long)]
    pub keys: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub params: PathBuf,
    /// Head shape to time; repeat for several rows.
    #[arg(long, required = true)]
    pub dims: Vec<String>,
    /// Calibrated costs; measured on the spot when absent.
    #[arg(long)]
    pub profile: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    pub repetitions: usize,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = planner::MIN_REPETITIONS)]
    pub repetitions: usize,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ShadowGenArgs {
    #[arg(long)]
    pub prior: PathBuf,
    /// Training set size per shadow.
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub count: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// DP-SGD settings as JSON; plain gradient descent when absent.
    #[arg(long)]
    pub dp: Option<PathBuf>,
    /// Training settings as JSON; the linear-probe defaults when absent.
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Attack {
    Toy,
}

#[derive(Debug, Args)]
pub struct EvalRocArgs {
    #[arg(long)]
    pub shadows: PathBuf,
    #[arg(long)]
    pub prior: PathBuf,
    #[arg(long, value_enum, default_value_t = Attack::Toy)]
    pub attack: Attack,
    #[arg(long)]
    pub out: PathBuf,
    /// Where to write the Gaussian fits of both hypotheses.
    #[arg(long)]
    pub fits: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TestKind {
    Np,
    Cum,
}

#[derive(Debug, Args)]
pub struct TprAtFprArgs {
    #[arg(long)]
    pub roc: PathBuf,
    #[arg(long)]
    pub fpr: f64,
    #[arg(long, value_enum, default_value_t = TestKind::Np)]
    pub test: TestKind,
}

fn usage_error(e: &clap::Error) -> String {
    if e.kind() == ErrorKind::UnknownArgument {
        if let Some(ContextValue::String(arg)) = e.get(ContextKind::InvalidArg) {
            return format!("unknown flag '{arg}'");
        }
    }
    let text = e.to_string();
    let first = text.lines().next().unwrap_or("invalid usage");
    first.trim_start_matches("error: ").to_string()
}

/// Parses `args` (program name first), runs the subcommand and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = write!(out, "{}", e.render());
            return 0;
        }
        Err(e) if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
            let _ = write!(err, "{}", e.render());
            return 2;
        }
        Err(e) => {
            let _ = writeln!(err, "error: {}", usage_error(&e));
            return 2;
        }
    };
    match commands::dispatch(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let line = e.to_string().replace('\n', " ");
            let _ = writeln!(err, "error: {line}");
            e.exit_code()
        }
    }
}
