use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use shadowpose_core::DescriptorMask;

#[derive(Debug, Parser)]
#[command(name = "shadowpose", version, about = "Shadow-informed rotation-invariant point features")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Export PPF and shadow-difference descriptors for every kNN edge as CSV.
    Features(FeaturesArgs),
    /// Check descriptor invariance under random joint rotations.
    VerifyInvariance(VerifyArgs),
    /// Sample, or report entropy or mode of, a Bingham distribution.
    Bingham {
        #[command(subcommand)]
        op: BinghamOp,
    },
    /// Train the mirrored-wing toy task with full and PPF-only descriptors and compare.
    DemoWingtip(DemoArgs),
    /// Train the mirrored-wing toy task once and write the metrics log.
    TrainToy(TrainArgs),
}

/// Flags that override values from `--config`.
#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Neighbourhood size.
    #[arg(long)]
    pub k: Option<usize>,
    /// Descriptor mask: sipf, ppf or sipf-no-direction.
    #[arg(long)]
    pub mask: Option<DescriptorMask>,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Point cloud (.xyz or ASCII .ply).
    #[arg(long)]
    pub input: PathBuf,
    /// Shadow rotation as a quaternion `w,x,y,z`; defaults to the mode of a seeded
    /// random Bingham distribution.
    #[arg(long, allow_hyphen_values = true)]
    pub rotation: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    pub rotation: Option<String>,
    /// Number of random rotations.
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    /// Rebuild the shadow from the rotated cloud instead of carrying it along
    /// (negative control).
    #[arg(long)]
    pub break_shadow: bool,
    /// Optional JSON report path; the report is always printed.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BinghamArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Orientation seed `a,b,c,d` (requires --z2).
    #[arg(long, allow_hyphen_values = true)]
    pub z1: Option<String>,
    /// Concentration seed `a,b,c` (requires --z1).
    #[arg(long, allow_hyphen_values = true)]
    pub z2: Option<String>,
    /// Output file; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum BinghamOp {
    Sample {
        #[command(flatten)]
        args: BinghamArgs,
        #[arg(long, default_value_t = 1000)]
        n: usize,
    },
    Entropy {
        #[command(flatten)]
        args: BinghamArgs,
    },
    Mode {
        #[command(flatten)]
        args: BinghamArgs,
    },
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Output directory for metrics logs and the summary.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Metrics log (newline-delimited JSON).
    #[arg(long)]
    pub out: PathBuf,
}
