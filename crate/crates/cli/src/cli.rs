use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mico_core::analysis::{BoundMetric, ReducedTransform};

use crate::experiments::ExperimentKind;
use crate::io::Format;
use crate::sources::{MdpSource, PolicySource};

#[derive(Debug, Parser)]
#[command(name = "mico", version, about = "Behavioral distances on finite MDPs")]
pub struct Cli {
    /// Directory that receives every output file.
    #[arg(long, short = 'o', global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Format of distance-table outputs.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Seed for stochastic commands.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Log verbosity on stderr: off, error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: log::LevelFilter,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a built-in or randomly generated MDP as JSON.
    Generate(GenerateArgs),
    /// Compute an exact distance table.
    Metric(MetricArgs),
    /// Estimate the MICo distance from sampled transition pairs.
    Online(OnlineArgs),
    /// Fit state embeddings to the MICo distance.
    Fit(FitArgs),
    /// Run an experiment and write JSON and CSV reports.
    Experiment(ExperimentArgs),
    /// Check the invariants of an MDP, policy, table or embedding file.
    Validate(ValidateArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Environment {
    Garnet,
    FourRooms,
    MirroredRooms,
    DayanGrid,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(value_enum)]
    pub environment: Environment,
    /// Garnet state count.
    #[arg(long)]
    pub states: Option<usize>,
    /// Garnet action count.
    #[arg(long)]
    pub actions: Option<usize>,
    /// Garnet rewards that depend on the state only.
    #[arg(long)]
    pub state_rewards: bool,
    /// Replace the built-in discount.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Output file stem; defaults to a name derived from the parameters.
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MetricKind {
    Mico,
    Bisim,
    PiBisim,
    ReducedMico,
}

impl MetricKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Mico => "mico",
            MetricKind::Bisim => "bisim",
            MetricKind::PiBisim => "pi-bisim",
            MetricKind::ReducedMico => "reduced-mico",
        }
    }
}

#[derive(Debug, Args)]
pub struct MdpPolicyArgs {
    /// MDP file, or four-rooms, mirrored-rooms, dayan-grid,
    /// garnet:<states>x<actions>:<seed>, garnet-sr:<states>x<actions>:<seed>.
    #[arg(long)]
    pub mdp: MdpSource,
    /// Policy file, or uniform, optimal, random:<seed>.
    #[arg(long, default_value = "uniform")]
    pub policy: PolicySource,
}

#[derive(Debug, Args)]
pub struct MetricArgs {
    #[command(flatten)]
    pub source: MdpPolicyArgs,
    #[arg(long, value_enum)]
    pub metric: MetricKind,
    /// Sup-norm accuracy of the returned table.
    #[arg(long, default_value_t = 1e-8)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 100_000)]
    pub max_iterations: usize,
    /// Output file stem; defaults to the metric name.
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ScheduleKind {
    Constant,
    Polynomial,
}

#[derive(Debug, Args)]
pub struct OnlineArgs {
    #[command(flatten)]
    pub source: MdpPolicyArgs,
    #[arg(long, default_value_t = 200_000)]
    pub steps: u64,
    #[arg(long, value_enum, default_value_t = ScheduleKind::Polynomial)]
    pub schedule: ScheduleKind,
    /// Step scale.
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    /// Decay exponent of the polynomial schedule.
    #[arg(long, default_value_t = 0.7)]
    pub p: f64,
    /// Steps between error probes in the trace.
    #[arg(long, default_value_t = 10_000)]
    pub probe_every: u64,
    /// Accuracy of the exact reference used for the trace.
    #[arg(long, default_value_t = 1e-10)]
    pub reference_epsilon: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum LossArg {
    Squared,
    Huber,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub source: MdpPolicyArgs,
    /// Embedding dimension.
    #[arg(long, short = 'm', default_value_t = 2)]
    pub dim: usize,
    #[arg(long, default_value_t = 50_000)]
    pub steps: usize,
    #[arg(long, default_value_t = 0.01)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    /// Weight of the angular term.
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, value_enum, default_value_t = LossArg::Huber)]
    pub loss: LossArg,
    /// Huber threshold.
    #[arg(long, default_value_t = 1.0)]
    pub delta: f64,
    /// Steps between target-table synchronizations.
    #[arg(long, default_value_t = 100)]
    pub target_sync_every: usize,
    /// Standard deviation of the initial embeddings.
    #[arg(long, default_value_t = 0.5)]
    pub init_scale: f64,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Experiment to run; may instead be set by the config file.
    #[arg(value_enum)]
    pub experiment: Option<ExperimentKind>,
    /// TOML config; its keys override the flags below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seeds, one run each (comma separated); overrides --seed.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Garnet state counts (gap) or MICo sizes (benchmark).
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    /// Garnet action counts (gap).
    #[arg(long, value_delimiter = ',')]
    pub actions: Option<Vec<usize>>,
    /// Bisimulation sizes (benchmark).
    #[arg(long, value_delimiter = ',')]
    pub bisim_sizes: Option<Vec<usize>>,
    /// Feature dimensions (features).
    #[arg(long, value_delimiter = ',')]
    pub dims: Option<Vec<usize>>,
    /// Sampled policies per Garnet instance (gap).
    #[arg(long)]
    pub n_policies: Option<usize>,
    /// Random MDPs searched (violation-search).
    #[arg(long)]
    pub n_trials: Option<usize>,
    /// Random-feature repeats (features) or timing repeats (benchmark).
    #[arg(long)]
    pub repeats: Option<usize>,
    /// MDP for the features experiment.
    #[arg(long)]
    pub mdp: Option<MdpSource>,
    /// Policy for the features experiment.
    #[arg(long)]
    pub policy: Option<PolicySource>,
    /// Skip the pi-bisimulation baseline (gap).
    #[arg(long)]
    pub no_pi_bisim: bool,
    /// Transform applied to reduced distances before embedding (features).
    #[arg(long, value_enum)]
    pub reduced_transform: Option<TransformArg>,
    /// Metric tested against policy values (violation-search).
    #[arg(long, value_enum)]
    pub metric: Option<BoundMetricArg>,
    /// Use greedy optimal policies (violation-search).
    #[arg(long)]
    pub optimal_policy: bool,
    /// Actions per Garnet state (benchmark).
    #[arg(long)]
    pub n_actions: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TransformArg {
    Identity,
    Sqrt,
}

impl From<TransformArg> for ReducedTransform {
    fn from(t: TransformArg) -> Self {
        match t {
            TransformArg::Identity => ReducedTransform::Identity,
            TransformArg::Sqrt => ReducedTransform::Sqrt,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BoundMetricArg {
    Bisim,
    Mico,
}

impl From<BoundMetricArg> for BoundMetric {
    fn from(m: BoundMetricArg) -> Self {
        match m {
            BoundMetricArg::Bisim => BoundMetric::Bisimulation,
            BoundMetricArg::Mico => BoundMetric::Mico,
        }
    }
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Artifact to check; the kind is detected from its contents.
    pub file: PathBuf,
    /// Tolerance for the metric axioms.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
}
