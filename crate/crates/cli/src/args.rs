use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "pruned-ntk", version, about = "NTK experiments on randomly pruned ReLU networks")]
pub struct Cli {
    /// Worker threads for Monte-Carlo sampling (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte-Carlo estimate of the empirical NTK at one input pair, as JSON.
    Ntk(NtkArgs),
    /// Empirical NTK against its limit over a grid of widths, as CSV.
    SweepWidth(SweepWidthArgs),
    /// Empirical NTK against its limit over a grid of keep-probabilities, as CSV.
    SweepAlpha(SweepAlphaArgs),
    /// Kernel regression with the infinite-width NTK.
    Regress(RegressArgs),
    /// Re-run the command recorded in a manifest and compare output digests.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct SeedArg {
    #[arg(long, env = "NTK_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct RescaleArg {
    /// Scale surviving weights by 1/sqrt(alpha) (default).
    #[arg(long, overrides_with = "no_rescale")]
    rescale: bool,
    #[arg(long, overrides_with = "rescale")]
    no_rescale: bool,
}

impl RescaleArg {
    pub fn enabled(&self) -> bool {
        !self.no_rescale
    }
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// First input: comma-separated decimals or a one-row CSV file.
    #[arg(long, allow_hyphen_values = true)]
    pub x: Option<String>,
    /// Second input (defaults to the first when only --x is given).
    #[arg(long, allow_hyphen_values = true)]
    pub x2: Option<String>,
    /// Dimension of the seeded random unit inputs used when --x is absent.
    #[arg(long, default_value_t = 16)]
    pub input_dim: usize,
}

#[derive(Debug, Args)]
pub struct NtkArgs {
    #[arg(long, default_value_t = 3)]
    pub depth: usize,
    #[arg(long, default_value_t = 1024)]
    pub width: usize,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[command(flatten)]
    pub rescale: RescaleArg,
    #[arg(long, default_value_t = 64)]
    pub samples: usize,
    #[command(flatten)]
    pub seed: SeedArg,
    #[command(flatten)]
    pub inputs: InputArgs,
    /// Include the analytic limit and deviations from it.
    #[arg(long)]
    pub limit: bool,
    /// Output file (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepWidthArgs {
    #[arg(long, value_delimiter = ',', default_value = "32,64,128,256,512,1024,2048,4096,8192")]
    pub widths: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    pub depth: usize,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[command(flatten)]
    pub rescale: RescaleArg,
    #[arg(long, default_value_t = 64)]
    pub samples: usize,
    #[command(flatten)]
    pub seed: SeedArg,
    #[command(flatten)]
    pub inputs: InputArgs,
    /// Follow each width's row with an unpruned control row on the same weights.
    #[arg(long)]
    pub control: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Scaling {
    Linear,
    Quadratic,
}

#[derive(Debug, Args)]
pub struct SweepAlphaArgs {
    #[arg(long, value_delimiter = ',', default_value = "1.0,0.9,0.8,0.7,0.6,0.5")]
    pub alphas: Vec<f64>,
    #[arg(long, default_value_t = 1024)]
    pub base_width: usize,
    #[arg(long, value_enum, default_value_t = Scaling::Linear)]
    pub scaling: Scaling,
    #[arg(long, default_value_t = 3)]
    pub depth: usize,
    #[command(flatten)]
    pub rescale: RescaleArg,
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    #[command(flatten)]
    pub seed: SeedArg,
    #[command(flatten)]
    pub inputs: InputArgs,
    #[arg(long, default_value_t = 20_000)]
    pub max_width: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RegressArgs {
    /// CSV of training rows: input coordinates followed by the target.
    #[arg(long)]
    pub train: PathBuf,
    /// CSV of test inputs.
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub depth: usize,
    /// Diagonal jitter tried only if the plain Gram matrix cannot be factored.
    #[arg(long, default_value_t = 0.0)]
    pub jitter: f64,
    /// Multiply every kernel value by this factor.
    #[arg(long, default_value_t = 1.0, hide = true)]
    pub kernel_scale: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Where to write the regenerated output (default: the recorded path).
    #[arg(long)]
    pub out: Option<PathBuf>,
}
