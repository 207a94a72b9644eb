//! The `reprobe` command line: argument parsing, option resolution and the
//! subcommands. Exit codes: 0 success, 2 bad arguments or unreadable inputs,
//! 3 divergence, 1 any other failure.

use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub mod commands;
pub mod output;
pub mod pnm;
pub mod settings;

/// A problem with what the user asked for; exits with code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(name = "reprobe", version, about = "Probe how much of an input survives in hidden-layer representations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Reconstruct an input from its layer embedding by gradient descent.
    Invert(InvertArgs),
    /// Run one inversion per grid point on the fixture models.
    Sweep(SweepArgs),
    /// Exact inversion round trip and conditioning probe of a linear model.
    Analytic(AnalyticArgs),
    /// ReLU width capacity, optionally with measured zero fractions.
    Capacity(CapacityArgs),
    /// Train a toy classifier on noise or pattern data.
    Train(TrainArgs),
    /// Invert one target through untrained, pattern-trained and noise-trained convnets.
    NoiseCompare(NoiseCompareArgs),
    /// Random line search for the step constant.
    EpsilonSearch(EpsilonSearchArgs),
}

/// Flags every subcommand accepts.
#[derive(Debug, Clone, Default, Args)]
pub struct BaseFlags {
    /// `key = value` file; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory [default: .]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for independent runs [default: 1]
    #[arg(long)]
    pub jobs: Option<usize>,
}

/// Inversion settings.
#[derive(Debug, Clone, Default, Args)]
pub struct InversionFlags {
    /// Target image (plain or binary portable anymap); resampled to the model input.
    #[arg(long)]
    pub target: Option<PathBuf>,
    /// 1-based layer whose embedding is matched.
    #[arg(long)]
    pub layer: Option<usize>,
    /// Iteration budget.
    #[arg(long)]
    pub iters: Option<usize>,
    /// Step size: `c` (constant) or `decay:c` (linear decay to zero).
    #[arg(long)]
    pub eps: Option<String>,
    /// Blur schedule: `off` or `start:end` sigmas, e.g. `2.4:0.4`.
    #[arg(long)]
    pub blur: Option<String>,
    /// Clamp the input to [0, 1] after every update.
    #[arg(long)]
    pub clamp: bool,
    /// Working precision: 32 or 64.
    #[arg(long)]
    pub precision: Option<String>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ModelFlags {
    /// Model manifest.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Trained parameter blob for the manifest.
    #[arg(long)]
    pub params: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SearchFlags {
    /// Step constants sampled by the line search.
    #[arg(long)]
    pub candidates: Option<usize>,
    /// Smallest constant sampled.
    #[arg(long)]
    pub lo: Option<f64>,
    /// Largest constant sampled.
    #[arg(long)]
    pub hi: Option<f64>,
    /// Iterations per trial run.
    #[arg(long)]
    pub search_iters: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct InvertArgs {
    #[command(flatten)]
    pub model: ModelFlags,
    #[command(flatten)]
    pub inv: InversionFlags,
    #[command(flatten)]
    pub base: BaseFlags,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    /// width, depth or iterations.
    pub kind: String,
    /// Comma-separated grid values [default: per kind].
    #[arg(long)]
    pub grid: Option<String>,
    #[command(flatten)]
    pub inv: InversionFlags,
    #[command(flatten)]
    pub search: SearchFlags,
    #[command(flatten)]
    pub base: BaseFlags,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyticArgs {
    /// Linear manifest to analyse instead of a random model.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
    /// Omit biases from the random model.
    #[arg(long)]
    pub no_bias: bool,
    #[arg(long)]
    pub precision: Option<String>,
    /// Noise draws in the conditioning probe.
    #[arg(long)]
    pub probe_seeds: Option<u64>,
    #[arg(long)]
    pub sigma_out: Option<f64>,
    #[arg(long)]
    pub sigma_in: Option<f64>,
    #[command(flatten)]
    pub base: BaseFlags,
}

#[derive(Debug, Clone, Args)]
pub struct CapacityArgs {
    /// Input element count.
    #[arg(long)]
    pub m: Option<u64>,
    /// Fraction of units zeroed per layer.
    #[arg(long)]
    pub p: Option<f64>,
    /// Layer index.
    #[arg(long)]
    pub n: Option<u32>,
    #[command(flatten)]
    pub model: ModelFlags,
    /// Random inputs used to measure zero fractions.
    #[arg(long)]
    pub count: Option<usize>,
    #[command(flatten)]
    pub base: BaseFlags,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// noise or structured.
    #[arg(long)]
    pub data: Option<String>,
    /// mlp or convnet.
    #[arg(long)]
    pub arch: Option<String>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub precision: Option<String>,
    #[command(flatten)]
    pub base: BaseFlags,
}

#[derive(Debug, Clone, Args)]
pub struct NoiseCompareArgs {
    #[command(flatten)]
    pub inv: InversionFlags,
    #[command(flatten)]
    pub search: SearchFlags,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[command(flatten)]
    pub base: BaseFlags,
}

#[derive(Debug, Clone, Args)]
pub struct EpsilonSearchArgs {
    #[command(flatten)]
    pub model: ModelFlags,
    #[command(flatten)]
    pub inv: InversionFlags,
    #[command(flatten)]
    pub search: SearchFlags,
    #[command(flatten)]
    pub base: BaseFlags,
}

/// Exit code for an error chain.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    use reprobe_core::Error as E;
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Diverged { .. } | E::AllCandidatesDiverged { .. } | E::NonFiniteLoss { .. } => 3,
                E::Shape(_) | E::InvalidArgument(_) | E::LayerIndex { .. } | E::Manifest { .. } | E::Label { .. } => 2,
                E::Singular { .. } => 1,
            };
        }
    }
    1
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Errors are reported on stderr.
pub fn run(args: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let mut echoed = args.clone();
    if let Some(first) = echoed.first_mut() {
        *first = "reprobe".into();
    }
    let line = output::command_line(&echoed);
    match commands::dispatch(&cli.command, &line) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}
