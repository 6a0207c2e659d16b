use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ralp_core::costmodel::StrategyKind;
use ralp_core::SkewnessMode;

#[derive(Debug, Parser)]
#[command(name = "ralp", version, about = "Layer placement planner and cluster simulator for PS-based CNN training")]
pub struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Skewness, eligibility and split for one model, as JSON.
    Profile(ProfileArgs),
    /// Per-boundary network costs and the chosen split.
    Split(SplitArgs),
    /// Per-step transfer volumes for each strategy.
    Volumes(VolumesArgs),
    /// Run one or more scenario files (or bundled scenario names).
    Simulate(SimulateArgs),
    /// List the benchmark catalog, or print one descriptor.
    Catalog(CatalogArgs),
}

/// A catalog name or a path to a `.model` descriptor.
#[derive(Debug, Args)]
pub struct ModelArg {
    pub model: String,

    /// Override the descriptor's batch size.
    #[arg(long)]
    pub batch: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    #[command(flatten)]
    pub model: ModelArg,

    /// Eligibility threshold K; a model qualifies when its skewness is below K.
    #[arg(long, short = 'k', allow_hyphen_values = true, default_value_t = ralp_core::profiler::DEFAULT_THRESHOLD)]
    pub threshold: f64,

    #[arg(long, value_parser = parse_mode, default_value = "index_weighted")]
    pub mode: SkewnessMode,
}

fn parse_mode(s: &str) -> Result<SkewnessMode, String> {
    s.parse()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Table,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[command(flatten)]
    pub model: ModelArg,

    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

/// One `--strategies` entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategyArg {
    All,
    One(StrategyKind),
}

fn parse_strategy(s: &str) -> Result<StrategyArg, String> {
    if s.eq_ignore_ascii_case("all") {
        Ok(StrategyArg::All)
    } else {
        s.parse().map(StrategyArg::One)
    }
}

#[derive(Debug, Args)]
pub struct VolumesArgs {
    /// Catalog names or descriptor paths.
    #[arg(required_unless_present = "reproduce_table3")]
    pub models: Vec<String>,

    #[arg(long, short, value_delimiter = ',', default_value = "8")]
    pub workers: Vec<usize>,

    /// baseline, ring, ralp or all.
    #[arg(long, short, value_delimiter = ',', value_parser = parse_strategy, default_value = "all")]
    pub strategies: Vec<StrategyArg>,

    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,

    /// Model size, ring and RALP volumes for alexnet, inception-v3 and vgg11 at 8 workers.
    #[arg(long, conflicts_with_all = ["models", "workers", "strategies"])]
    pub reproduce_table3: bool,

    #[arg(long)]
    pub batch: Option<u64>,
}

impl VolumesArgs {
    pub fn strategy_kinds(&self) -> Vec<StrategyKind> {
        let mut out = Vec::new();
        for s in &self.strategies {
            let add: &[StrategyKind] = match s {
                StrategyArg::All => &StrategyKind::ALL,
                StrategyArg::One(k) => std::slice::from_ref(k),
            };
            for k in add {
                if !out.contains(k) {
                    out.push(*k);
                }
            }
        }
        out
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario files or bundled scenario names.
    #[arg(required = true)]
    pub scenarios: Vec<String>,

    /// Override the step count of every scenario.
    #[arg(long)]
    pub steps: Option<usize>,

    /// Write the JSON report here.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Write per-worker, per-step breakdowns as CSV here.
    #[arg(long)]
    pub timeline: Option<PathBuf>,

    /// Run k copies of each scenario side by side and report slowdowns.
    #[arg(long, value_name = "K")]
    pub consolidate: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CatalogArgs {
    /// Print this model's descriptor instead of the listing.
    pub name: Option<String>,

    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}
