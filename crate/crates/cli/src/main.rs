use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use logitshift::datagen::{Preset, Scenario};
use logitshift::eval::ReportStyle;
use logitshift::nets::{Arch, BaselineKind, Optimizer, TrainConfig};
use logitshift::proxies::ProxyKind;

mod commands;

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "LOGITSHIFT_OUT";
const DEFAULT_OUT: &str = "logitshift-out";

#[derive(Debug, Parser)]
#[command(
    name = "logitshift",
    version,
    about = "Proxy-based unlearning with closed-form logit shifts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a synthetic train/test pair and a forget split
    GenData(GenData),
    /// Train a classifier with cross-entropy
    Train(Train),
    /// Fit a proxy pair on a dataset and its forget split
    FitProxy(FitProxy),
    /// Find the largest safe scale of the unlearning signal
    EtaSearch(EtaSearch),
    /// Compute the unlearned target probits on a dataset
    Unlearn(Unlearn),
    /// Fine-tune a model towards target probits
    Distill(Distill),
    /// Run a fine-tuning baseline
    Baseline(BaselineCmd),
    /// Run a benchmark plan and write the results tree
    Benchmark(Benchmark),
    /// Summarize a results tree
    Report(Report),
    /// Attacker query bound for a given divergence
    Stein(Stein),
}

#[derive(Debug, Args)]
struct GenData {
    /// Named generator
    #[arg(long, default_value = "subclass", conflicts_with = "spec")]
    preset: Preset,
    /// Mixture spec file (TOML) instead of a preset
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    n_per_subclass: usize,
    #[arg(long, default_value_t = 100)]
    test_per_subclass: usize,
    /// `class:Y`, `subclass:Y:S` or `random:N`; empty forget set when omitted
    #[arg(long)]
    scenario: Option<Scenario>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory [default: $LOGITSHIFT_OUT or ./logitshift-out]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainFlags {
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long = "lr", default_value_t = 1e-2)]
    learning_rate: f64,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    /// Learning-rate factor applied after each epoch
    #[arg(long, default_value_t = 0.95)]
    lr_decay: f64,
    /// `adam` or `sgd`
    #[arg(long, default_value = "adam", value_parser = ["adam", "sgd"])]
    optimizer: String,
    /// Momentum of `sgd`
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
}

impl TrainFlags {
    fn config(&self, seed: u64) -> TrainConfig {
        let optimizer = match self.optimizer.as_str() {
            "sgd" => Optimizer::SgdMomentum {
                beta: self.momentum,
            },
            _ => Optimizer::adam(),
        };
        TrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed,
            optimizer,
            lr_decay: self.lr_decay,
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Args)]
struct Train {
    /// Training set
    #[arg(long)]
    data: PathBuf,
    /// `linear`, `mlp1` or `mlp2`
    #[arg(long, default_value = "mlp1")]
    arch: Arch,
    #[arg(long, default_value_t = 32)]
    hidden: usize,
    #[command(flatten)]
    train: TrainFlags,
    /// Write the per-epoch trace as JSON
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Checkpoint path [default: $LOGITSHIFT_OUT/model.txt]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FitProxy {
    /// Dataset file
    #[arg(long)]
    data: PathBuf,
    /// Forget split (JSON); everything is retained when omitted
    #[arg(long)]
    split: Option<PathBuf>,
    /// LDA, QDA, LDA-Mix, QDA-Mix, LDA-2C, DIR or DIR-2C
    #[arg(long)]
    kind: ProxyKind,
    /// Ridge factor λ, added as λ·tr(Σ)/d on the diagonal
    #[arg(long, default_value_t = logitshift::proxies::DEFAULT_RIDGE)]
    ridge: f64,
    /// One covariance fitted on the full set, shared by both proxies (default)
    #[arg(long, conflicts_with = "per_support_sigma")]
    shared_sigma_from_full: bool,
    /// Fit the retain proxy's covariance on the retain set only
    #[arg(long)]
    per_support_sigma: bool,
    /// Full instead of diagonal class covariances for QDA kinds
    #[arg(long)]
    qda_full_cov: bool,
    /// Fit on features projected to this many dimensions
    #[arg(long)]
    sketch_dim: Option<usize>,
    /// Seed of the projection
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// [default: $LOGITSHIFT_OUT/proxy.json]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EtaSearch {
    /// Dataset file
    #[arg(long)]
    data: PathBuf,
    /// Base model checkpoint
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    proxy: PathBuf,
    #[arg(long, default_value_t = logitshift::unlearn::DEFAULT_TOL)]
    tol: f64,
    /// Also write h on an even grid of this many steps as CSV
    #[arg(long)]
    curve: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    curve_steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// [default: $LOGITSHIFT_OUT/eta.json]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Unlearn {
    /// Dataset file
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    proxy: PathBuf,
    /// Fixed scale; searched when omitted
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long, default_value_t = logitshift::unlearn::DEFAULT_TOL)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// [default: $LOGITSHIFT_OUT/targets.json]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Distill {
    /// Dataset file
    #[arg(long)]
    data: PathBuf,
    /// Student checkpoint to start from
    #[arg(long)]
    model: PathBuf,
    /// Target probits written by `unlearn`
    #[arg(long)]
    targets: PathBuf,
    #[command(flatten)]
    train: TrainFlags,
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// [default: $LOGITSHIFT_OUT/distilled.txt]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BaselineCmd {
    /// FT, GA, GA+FT, RL+FT or Retrain
    #[arg(long)]
    kind: BaselineKind,
    /// Dataset file
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    split: PathBuf,
    /// Initial model checkpoint
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    train: TrainFlags,
    /// Learning-rate factor of gradient ascent
    #[arg(long, default_value_t = 0.1)]
    ascent_lr_factor: f64,
    /// Epoch cap of gradient ascent
    #[arg(long, default_value_t = 5)]
    ascent_max_epochs: usize,
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// [default: $LOGITSHIFT_OUT/<kind>.txt]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Benchmark {
    /// Plan file (TOML); the built-in demo plan when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Cells run in parallel
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Replace the plan's seed list with this one seed
    #[arg(long)]
    seed: Option<u64>,
    /// Results root [default: $LOGITSHIFT_OUT/results]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Report {
    /// Results root written by `benchmark`
    #[arg(long)]
    results: PathBuf,
    /// `table` or `csv`
    #[arg(long, default_value = "table")]
    style: ReportStyle,
    /// Add rows for the initial and retrained models
    #[arg(long)]
    include_references: bool,
    /// Accepted for uniformity; the report is deterministic
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write to a file instead of standard output
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Stein {
    /// False-positive rate in (0, 1/2)
    #[arg(long)]
    alpha: f64,
    /// Expected KL divergence in nats
    #[arg(long)]
    kl: f64,
    /// Accepted for uniformity; the bound is deterministic
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.origin());
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
