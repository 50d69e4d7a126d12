use std::fmt::Display;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mdpbw_core::{EmConfig, LengthSampler, ZeroLikelihoodPolicy};
use serde::{Serialize, Serializer};

use crate::refs::{InitSpec, ModelRef, Query};

fn display<T: Display, S: Serializer>(v: &T, ser: S) -> Result<S::Ok, S::Error> {
    ser.serialize_str(&v.to_string())
}

fn display_opt<T: Display, S: Serializer>(v: &Option<T>, ser: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(x) => ser.serialize_str(&x.to_string()),
        None => ser.serialize_none(),
    }
}

fn display_vec<T: Display, S: Serializer>(v: &[T], ser: S) -> Result<S::Ok, S::Error> {
    ser.collect_seq(v.iter().map(ToString::to_string))
}

#[derive(Debug, Parser)]
#[command(name = "mdpbw", version, about = "Learn labelled MDPs from traces with Baum-Welch and active sampling")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Sample a dataset of traces from a model.
    Sample(SampleArgs),
    /// Fit a model to a dataset with Baum-Welch.
    Learn(LearnArgs),
    /// Run the active learning loop against a simulated or replayed system.
    Active(ActiveArgs),
    /// Compute likelihood, KL and reachability metrics for models.
    Eval(EvalArgs),
}

/// Model references: `reber`, `street`, `street:p=<v>`, `grid`,
/// `grid:<layout.toml>`, or a model JSON file.
const MODEL_HELP: &str = "Model: reber, street[:p=<v>], grid[:<layout.toml>], or a model JSON file";

const LEN_HELP: &str = "Trace lengths: fixed:<T>, geo:<p>, or shifted-geo:<offset>:<p>";

#[derive(Debug, Args, Serialize)]
pub struct SeedArg {
    /// Master seed for every random choice of the run.
    #[arg(long, env = "MDPBW_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct SampleArgs {
    #[arg(long, help = MODEL_HELP)]
    #[serde(serialize_with = "display")]
    pub model: ModelRef,
    /// Action scheduler; only `uniform` is available.
    #[arg(long, default_value = "uniform")]
    pub scheduler: SchedulerRef,
    #[arg(long, default_value = "fixed:5", help = LEN_HELP)]
    #[serde(serialize_with = "display")]
    pub len: LengthSampler,
    /// Number of traces.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub count: u64,
    #[command(flatten)]
    #[serde(flatten)]
    pub seed: SeedArg,
    /// Serve recorded traces from this file instead of simulating the model.
    #[arg(long)]
    pub replay: Option<PathBuf>,
    /// Dataset output file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchedulerRef {
    Uniform,
}

#[derive(Debug, Args, Serialize)]
pub struct EmArgs {
    /// Maximum number of Baum-Welch updates.
    #[arg(long, default_value_t = 300)]
    pub max_iters: usize,
    /// Stop once the total log-likelihood gains at most this many nats.
    #[arg(long, default_value_t = 0.01)]
    pub epsilon: f64,
    /// Mix the initial hypothesis with this uniform floor (at most 1e-3)
    /// instead of skipping sequences it cannot generate.
    #[arg(long)]
    pub smooth: Option<f64>,
}

impl EmArgs {
    pub fn config(&self) -> EmConfig {
        EmConfig {
            epsilon: self.epsilon,
            max_iterations: self.max_iters,
            zero_likelihood: match self.smooth {
                Some(floor) => ZeroLikelihoodPolicy::Smooth { floor },
                None => ZeroLikelihoodPolicy::Skip,
            },
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct LearnArgs {
    /// Training dataset.
    #[arg(long)]
    pub data: PathBuf,
    /// Initial hypothesis: `random:<states>` or a model JSON file.
    #[arg(long)]
    #[serde(serialize_with = "display")]
    pub init: InitSpec,
    /// Take labels and actions for a random hypothesis from this model
    /// instead of from the data.
    #[arg(long)]
    #[serde(serialize_with = "display_opt")]
    pub alphabet_from: Option<ModelRef>,
    /// Learn a Markov chain (single action; label-only lines allowed).
    #[arg(long)]
    pub mc: bool,
    /// Random restarts; the fit with the highest final likelihood wins.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub restarts: u32,
    #[command(flatten)]
    #[serde(flatten)]
    pub em: EmArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub seed: SeedArg,
    /// Learned model output (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Training report output; defaults to `<out>.report.json`.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Baseline {
    Uniform,
}

#[derive(Debug, Args, Serialize)]
pub struct ActiveArgs {
    /// The system to learn; with `--replay` only its labels and actions are used.
    #[arg(long, help = MODEL_HELP)]
    #[serde(serialize_with = "display")]
    pub model: ModelRef,
    /// Serve recorded traces (a `traces.txt` from an earlier run) instead of
    /// simulating the model.
    #[arg(long)]
    pub replay: Option<PathBuf>,
    /// Initial dataset; drawn from the system with uniform actions when absent.
    #[arg(long)]
    pub seed_data: Option<PathBuf>,
    /// Number of seed traces drawn when `--seed-data` is absent.
    #[arg(long, default_value_t = 50)]
    pub seed_count: usize,
    #[arg(long, default_value = "fixed:12", help = LEN_HELP)]
    #[serde(serialize_with = "display")]
    pub seed_len: LengthSampler,
    /// Initial hypothesis; defaults to a random model with as many states as
    /// the system model.
    #[arg(long)]
    #[serde(serialize_with = "display_opt")]
    pub init: Option<InitSpec>,
    /// Active learning iterations.
    #[arg(long, default_value_t = 200)]
    pub iterations: usize,
    /// Traces sampled per iteration.
    #[arg(long, default_value_t = 1)]
    pub per_iter: usize,
    #[arg(long, default_value = "fixed:12", help = LEN_HELP)]
    #[serde(serialize_with = "display")]
    pub len: LengthSampler,
    /// Test dataset; drawn from the system when absent and `--test-count` > 0.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Number of test traces drawn when `--test` is absent.
    #[arg(long, default_value_t = 200)]
    pub test_count: usize,
    #[arg(long, default_value = "fixed:12", help = LEN_HELP)]
    #[serde(serialize_with = "display")]
    pub test_len: LengthSampler,
    /// Also run the passive loop with the same trace budget.
    #[arg(long)]
    pub baseline: Option<Baseline>,
    /// Re-fit from the initial hypothesis in every iteration.
    #[arg(long)]
    pub cold_start: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub em: EmArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub seed: SeedArg,
    /// Output directory for model, datasets, curve and report.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    /// Model to evaluate; repeat for several rows.
    #[arg(long = "model", required = true, help = MODEL_HELP)]
    #[serde(serialize_with = "display_vec")]
    pub models: Vec<ModelRef>,
    /// Known true model, for KL and for drawing a test set.
    #[arg(long = "true")]
    #[serde(serialize_with = "display_opt")]
    pub true_model: Option<ModelRef>,
    /// Training dataset, for the per-trace training log-likelihood column.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Test dataset.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Draw this many test traces from `--true` when `--test` is absent.
    #[arg(long)]
    pub test_count: Option<usize>,
    #[arg(long, default_value = "fixed:5", help = LEN_HELP)]
    #[serde(serialize_with = "display")]
    pub test_len: LengthSampler,
    /// Estimate the KL divergence from `--true` on the test set.
    #[arg(long, requires = "true_model")]
    pub kl: bool,
    /// Maximal reachability query: goal:<label>:<k (goal within k-1 emissions
    /// after the initial one), goal:<label>:<=k (within k), or
    /// until:<avoid>:<goal>:<=k. Repeatable.
    #[arg(long)]
    #[serde(serialize_with = "display_vec")]
    pub pmax: Vec<Query>,
    #[command(flatten)]
    #[serde(flatten)]
    pub seed: SeedArg,
    /// Metrics CSV output (JSON is written alongside); stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
