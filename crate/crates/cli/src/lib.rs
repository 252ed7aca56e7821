//! `hikm`: build cluster trees over embedding files, draw balanced subsets
//! from them, and run the desk-scale centroid-distribution experiments.
//!
//! Exit codes: 0 success, 1 runtime or I/O failure (or a counterexample from
//! `kl-check`), 2 bad arguments or config, 3 malformed input file, 4 tree and
//! dataset that do not belong together.

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hikm_core::{Mode, Strategy};

pub mod commands;
pub mod manifest;
pub mod svg;

#[derive(Debug, Parser)]
#[command(name = "hikm", version, about = "Hierarchical k-means curation of embedding pools")]
pub struct Cli {
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "HIKM_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a cluster tree from a dataset and a TOML config.
    Cluster(ClusterArgs),
    /// Draw a balanced subset of point indices from a tree.
    Sample(SampleArgs),
    /// KL-to-uniform of top-level centroids for several tree shapes on the 2-D mixture.
    Simulate(SimulateArgs),
    /// 1-D centroid histograms for power distortions `‖x − c‖^s`.
    Zador(ZadorArgs),
    /// Random search for distributions where tempering `p^t` moves away from uniform.
    KlCheck(KlCheckArgs),
    /// Per-class cluster counts and sizes of a tree over a labeled dataset.
    Stats(StatsArgs),
    /// Write the 2-D Gaussian-plus-uniform mixture as a dataset file.
    GenMixture(GenMixtureArgs),
    /// Write a labeled blob pool with power-law class sizes.
    GenPool(GenPoolArgs),
    /// Replay a run from its manifest and compare output checksums.
    Rerun(RerunArgs),
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Tree manifest path; level payloads are written next to it.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutFormat {
    /// one decimal index per line
    Text,
    /// little-endian u64 array
    Bin,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub tree: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub target: usize,
    #[arg(long, default_value = "hier")]
    pub mode: Mode,
    #[arg(long, default_value = "r")]
    pub strategy: Strategy,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    pub format: OutFormat,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// TOML with mixture, top_k, configs, bandwidth and resolution; defaults otherwise.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory for simulate.csv and figures.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Consecutive seeds starting at --seed.
    #[arg(long, default_value_t = 1)]
    pub runs: u64,
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DensityKind {
    Normal,
    Bimodal,
    Exponential,
}

#[derive(Debug, Args)]
pub struct ZadorArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "normal")]
    pub density: DensityKind,
    #[arg(long = "s", value_delimiter = ',', default_value = "2,4,8")]
    pub exponents: Vec<f64>,
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 64)]
    pub k: usize,
    #[arg(long, default_value_t = 16)]
    pub bins: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Args)]
pub struct KlCheckArgs {
    #[arg(long, default_value_t = 10_000)]
    pub trials: usize,
    #[arg(long, default_value_t = 32)]
    pub max_support: usize,
    #[arg(long = "t", value_delimiter = ',', default_value = "0.1,0.3,0.5,0.7,0.9")]
    pub ts: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Optional CSV with one row per t.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub tree: PathBuf,
    /// One integer class label per line, in point order.
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, default_value_t = hikm_core::evalsim::balance::DEFAULT_KNN)]
    pub knn: usize,
    /// Output directory for stats.csv and fits.csv.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Args)]
pub struct GenMixtureArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 9000)]
    pub n: usize,
}

#[derive(Debug, Args)]
pub struct GenPoolArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub classes: usize,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Approximate size after the power-law cut.
    #[arg(long, default_value_t = 20_000)]
    pub total: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct RerunArgs {
    pub manifest: PathBuf,
}

/// A failed command: message for standard error plus process exit code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn arg(message: impl Into<String>) -> Self {
        Self::new(2, message)
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self::new(1, format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<hikm_core::Error> for Failure {
    fn from(e: hikm_core::Error) -> Self {
        use hikm_core::Error as E;
        let code = match &e {
            E::Config(_) | E::Argument(_) | E::KExceedsInput { .. } => 2,
            E::Format(_)
            | E::Truncated { .. }
            | E::NonFinite { .. }
            | E::Version { .. }
            | E::Checksum(_)
            | E::InvalidAssignment { .. }
            | E::Tree(_) => 3,
            E::DimensionMismatch { .. } => 4,
            E::Io { .. } | E::Degenerate(_) => 1,
        };
        Failure::new(code, e.to_string())
    }
}

/// Per-invocation context handed to every command.
pub struct Context {
    pub args: Vec<String>,
    pub threads: Option<usize>,
    pub started: Instant,
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let ctx = Context {
        args: argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect(),
        threads: cli.threads,
        started: Instant::now(),
    };
    match execute(&ctx, cli.command) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {f}");
            f.code
        }
    }
}

fn execute(ctx: &Context, command: Command) -> Result<(), Failure> {
    let go = move || match command {
        Command::Cluster(a) => commands::cmd_cluster(ctx, &a),
        Command::Sample(a) => commands::cmd_sample(ctx, &a),
        Command::Simulate(a) => commands::cmd_simulate(ctx, &a),
        Command::Zador(a) => commands::cmd_zador(ctx, &a),
        Command::KlCheck(a) => commands::cmd_kl_check(ctx, &a),
        Command::Stats(a) => commands::cmd_stats(ctx, &a),
        Command::GenMixture(a) => commands::cmd_gen_mixture(ctx, &a),
        Command::GenPool(a) => commands::cmd_gen_pool(ctx, &a),
        Command::Rerun(a) => commands::cmd_rerun(&a),
    };
    match ctx.threads {
        Some(0) => Err(Failure::arg("--threads must be >= 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Failure::new(1, format!("thread pool: {e}")))?
            .install(go),
        None => go(),
    }
}
