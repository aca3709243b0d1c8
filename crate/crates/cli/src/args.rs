use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use latentcache::simgen::Popularity;
use latentcache::store::Policy;

use crate::config::CONFIG_ENV;

#[derive(Debug, Parser)]
#[command(
    name = "latentcache",
    version,
    about = "Approximate latent cache simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic request trace as JSON lines.
    GenTrace(GenTraceArgs),
    /// Replay a trace through the cache engine.
    Simulate(SimulateArgs),
    /// Sweep capacities and policies over one trace.
    BenchPolicies(BenchArgs),
    /// Compress and decompress one prompt's latents and report fidelity and size.
    Codec(CodecArgs),
}

#[derive(Debug, Args)]
pub struct GenTraceArgs {
    #[arg(long, default_value_t = 50_000)]
    pub requests: u64,
    #[arg(long, default_value_t = 500)]
    pub objects: u32,
    #[arg(long, default_value_t = 500)]
    pub backgrounds: u32,
    /// Zipf exponent of template popularity.
    #[arg(long, default_value_t = 1.1, allow_negative_numbers = true)]
    pub zipf: f64,
    #[arg(long, value_enum, default_value = "factored")]
    pub popularity: PopularityArg,
    /// Requests per popularity decay period; 0 disables decay.
    #[arg(long, default_value_t = 10_000)]
    pub half_life: u64,
    /// Fraction of top ranks that never decay.
    #[arg(long, default_value_t = 0.0)]
    pub stable_fraction: f64,
    #[arg(long, default_value_t = 512)]
    pub embed_dim: usize,
    #[arg(long, default_value_t = 4)]
    pub core_tokens: u32,
    #[arg(long, default_value_t = 0)]
    pub detail_tokens: u32,
    #[arg(long, default_value_t = 8)]
    pub detail_pool: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum PopularityArg {
    Template,
    Factored,
}

impl From<PopularityArg> for Popularity {
    fn from(p: PopularityArg) -> Self {
        match p {
            PopularityArg::Template => Popularity::Template,
            PopularityArg::Factored => Popularity::Factored,
        }
    }
}

/// Flags shared by `simulate` and `bench-policies`; each overrides the config file.
#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML config file.
    #[arg(long, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub policy: Option<Policy>,
    #[arg(long)]
    pub hit_threshold: Option<f64>,
    #[arg(long)]
    pub compress_threshold: Option<f64>,
    /// Five ascending similarity edges, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub bins: Option<Vec<f64>>,
    /// Dollars per GPU hour.
    #[arg(long)]
    pub gpu_rate: Option<f64>,
    /// Dollars per GB-month of cache storage.
    #[arg(long)]
    pub storage_rate: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed of the synthetic latents.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Bytes, with optional KB/MB/GB suffix, or a percentage of the working set.
    #[arg(long)]
    pub capacity_bytes: Option<String>,
    /// Run every policy on the same trace.
    #[arg(long)]
    pub all_policies: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Capacities, comma separated; same syntax as `simulate --capacity-bytes`.
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
    pub capacities: Vec<String>,
    /// Policies to compare; all when absent.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub policies: Option<Vec<Policy>>,
}

#[derive(Debug, Args)]
pub struct CodecArgs {
    /// Latent file to compress instead of synthetic latents.
    #[arg(long, conflicts_with_all = ["frames", "height", "width", "channels", "redundancy", "alphas", "noise"])]
    pub latents: Option<PathBuf>,
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub channels: Option<usize>,
    /// Redundant-frame fraction: one value for all steps, or five.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub redundancy: Option<Vec<f64>>,
    /// Five differential scales.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub alphas: Option<Vec<f64>>,
    /// Differential noise relative to its RMS.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Seed of the synthetic prompt.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = latentcache::defaults::COMPRESS_THRESHOLD)]
    pub compress_threshold: f64,
    /// Fix the base step instead of choosing the best.
    #[arg(long)]
    pub base: Option<u32>,
    /// Also write the uncompressed latents to this file.
    #[arg(long)]
    pub save_latents: Option<PathBuf>,
    /// Report file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
