//! dhprep: train and evaluate Hawkes-excited dynamic-network embeddings.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;
use dhprep_core::{DhprepError, Result};

#[derive(Parser)]
#[command(
    name = "dhprep",
    version,
    about = "Dynamic-network embeddings driven by a Hawkes edge-formation model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train embeddings on a tab-separated temporal edge list
    Train(TrainCmd),
    /// Evaluate a checkpoint on link, new-link, or recommendation tasks
    Eval(EvalCmd),
    /// Generate a planted two-block dynamic network plus labels
    Generate(GenerateCmd),
    /// Verify analytic gradients against central finite differences
    Gradcheck(GradcheckCmd),
    /// Train and evaluate every kernel x window combination
    Sweep(SweepCmd),
    /// Print the intensity breakdown of one vertex pair
    Inspect(InspectCmd),
}

/// Applies this flag group onto a resolved configuration.
trait Apply {
    fn apply(&self, cfg: &mut RunConfig) -> Result<()>;
}

fn maybe_set(cfg: &mut RunConfig, key: &str, value: &Option<String>) -> Result<()> {
    if let Some(v) = value {
        cfg.set(key, v)?;
    }
    Ok(())
}

#[derive(Args)]
struct CommonOpts {
    /// Flat key = value config file applied before flag overrides
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory for reports and artifacts [default: .]
    #[arg(long, value_name = "DIR")]
    out: Option<String>,
    /// Master random seed [default: 42]
    #[arg(long, value_name = "U64")]
    seed: Option<String>,
}

impl Apply for CommonOpts {
    fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        maybe_set(cfg, "out", &self.out)?;
        maybe_set(cfg, "seed", &self.seed)
    }
}

#[derive(Args)]
struct NetOpt {
    /// Input edge-list path (src <TAB> dst <TAB> timestamp [<TAB> weight])
    #[arg(long, value_name = "PATH")]
    network: Option<String>,
}

impl Apply for NetOpt {
    fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        maybe_set(cfg, "network", &self.network)
    }
}

#[derive(Args)]
struct IntervalOpt {
    /// Snapshot bucket width in timestamp units [default: 1]
    #[arg(long, value_name = "U64")]
    interval: Option<String>,
}

impl Apply for IntervalOpt {
    fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        maybe_set(cfg, "interval", &self.interval)
    }
}

#[derive(Args)]
struct ModelOpt {
    /// Checkpoint path written by the train command
    #[arg(long, value_name = "PATH")]
    checkpoint: Option<String>,
}

impl Apply for ModelOpt {
    fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        maybe_set(cfg, "checkpoint", &self.checkpoint)
    }
}

#[derive(Args)]
struct DimOpt {
    /// Embedding dimension [default: 32]
    #[arg(long, value_name = "USIZE")]
    dim: Option<String>,
}

impl Apply for DimOpt {
    fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        maybe_set(cfg, "dim", &self.dim)
    }
}

#[derive(Args)]
struct TrainOpts {
    /// Training epochs; 0 checkpoints the initialized state [default: 100]
    #[arg(long, value_name = "USIZE")]
    epochs: Option<String>,
    /// Events per SGD batch [default: 256]
    #[arg(long = "batch-size", value_name = "USIZE")]
    batch_size: Option<String>,
    /// Constant SGD learning rate [default: 0.01]
    #[arg(long = "learning-rate", value_name = "F64")]
    learning_rate: Option<String>,
    /// Weight of the Hawkes negative-sampling loss [default: 1]
    #[arg(long, value_name = "F64")]
    beta0: Option<String>,
    /// Weight of the temporal smoothness loss [default: 0.01]
    #[arg(long, value_name = "F64")]
    beta1: Option<String>,
    /// Negative samples per event [default: 5]
    #[arg(long, value_name = "USIZE")]
    negatives: Option<String>,
    /// Historical snapshots visible to the excitation sum [default: 5]
    #[arg(long, value_name = "USIZE")]
    window: Option<String>,
    /// Decay kernel: exponential, power-law, rayleigh, flat [default: exponential]
    #[arg(long, value_name = "NAME")]
    kernel: Option<String>,
    /// Exponent on degree for negative sampling [default: 1]
    #[arg(long = "neg-exponent", value_name = "F64")]
    neg_exponent: Option<String>,
    /// Lock-free multi-worker updates, true or false [default: false]
    #[arg(long, value_name = "BOOL")]
    parallel: Option<String>,
}

impl Apply for TrainOpts {
    fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        maybe_set(cfg, "epochs", &self.epochs)?;
        maybe_set(cfg, "batch_size", &self.batch_size)?;
        maybe_set(cfg, "learning_rate", &self.learning_rate)?;
        maybe_set(cfg, "beta0", &self.beta0)?;
        maybe_set(cfg, "beta1", &self.beta1)?;
        maybe_set(cfg, "negatives", &self.negatives)?;
        maybe_set(cfg, "window", &self.window)?;
        maybe_set(cfg, "kernel", &self.kernel)?;
        maybe_set(cfg, "neg_exponent", &self.neg_exponent)?;
        maybe_set(cfg, "parallel", &self.parallel)
    }
}

#[derive(Args)]
struct EvalOpts {
    /// Task: link, newlink, or recommend [default: link]
    #[arg(long, value_name = "NAME")]
    task: Option<String>,
    /// Negatives sampled per positive pair [default: 1]
    #[arg(long, value_name = "F64")]
    ratio: Option<String>,
    /// Comma-separated cutoffs for recommendation metrics [default: 10,20]
    #[arg(long, value_name = "LIST")]
    k: Option<String>,
    /// Cross-validation folds [default: 5]
    #[arg(long, value_name = "USIZE")]
    folds: Option<String>,
    /// Cross-validation repeats [default: 10]
    #[arg(long, value_name = "USIZE")]
    repeats: Option<String>,
}

impl Apply for EvalOpts {
    fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        maybe_set(cfg, "task", &self.task)?;
        maybe_set(cfg, "ratio", &self.ratio)?;
        maybe_set(cfg, "k", &self.k)?;
        maybe_set(cfg, "folds", &self.folds)?;
        maybe_set(cfg, "repeats", &self.repeats)
    }
}

#[derive(Args)]
struct GenOpts {
    /// Vertex count [default: 100]
    #[arg(long, value_name = "USIZE")]
    vertices: Option<String>,
    /// Comma-separated block sizes summing to the vertex count [default: 50,50]
    #[arg(long, value_name = "LIST")]
    blocks: Option<String>,
    /// Snapshot count [default: 6]
    #[arg(long, value_name = "USIZE")]
    snapshots: Option<String>,
    /// Intra-block edge probability [default: 0.1]
    #[arg(long = "p-in", value_name = "F64")]
    p_in: Option<String>,
    /// Inter-block edge probability [default: 0.01]
    #[arg(long = "p-out", value_name = "F64")]
    p_out: Option<String>,
    /// Probability an edge survives to the next snapshot [default: 0.5]
    #[arg(long, value_name = "F64")]
    persistence: Option<String>,
    /// Reconnection boost mode: none or exponential [default: none]
    #[arg(long, value_name = "NAME")]
    decay: Option<String>,
    /// Boost decay rate for the exponential mode [default: 1]
    #[arg(long = "decay-rate", value_name = "F64")]
    decay_rate: Option<String>,
}

impl Apply for GenOpts {
    fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        maybe_set(cfg, "vertices", &self.vertices)?;
        maybe_set(cfg, "blocks", &self.blocks)?;
        maybe_set(cfg, "snapshots", &self.snapshots)?;
        maybe_set(cfg, "p_in", &self.p_in)?;
        maybe_set(cfg, "p_out", &self.p_out)?;
        maybe_set(cfg, "persistence", &self.persistence)?;
        maybe_set(cfg, "decay", &self.decay)?;
        maybe_set(cfg, "decay_rate", &self.decay_rate)
    }
}

#[derive(Args)]
struct SweepOpts {
    /// Comma-separated kernels to sweep [default: exponential,power-law,rayleigh,flat]
    #[arg(long, value_name = "LIST")]
    kernels: Option<String>,
    /// Comma-separated history windows to sweep [default: 1,5]
    #[arg(long, value_name = "LIST")]
    windows: Option<String>,
}

impl Apply for SweepOpts {
    fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        maybe_set(cfg, "kernels", &self.kernels)?;
        maybe_set(cfg, "windows", &self.windows)
    }
}

#[derive(Args)]
struct CheckOpts {
    /// Coordinates to compare [default: 120]
    #[arg(long, value_name = "USIZE")]
    coords: Option<String>,
    /// Central-difference step [default: 1e-5]
    #[arg(long, value_name = "F64")]
    step: Option<String>,
    /// Maximum allowed relative error [default: 1e-4]
    #[arg(long, value_name = "F64")]
    tolerance: Option<String>,
}

impl Apply for CheckOpts {
    fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        maybe_set(cfg, "coords", &self.coords)?;
        maybe_set(cfg, "step", &self.step)?;
        maybe_set(cfg, "tolerance", &self.tolerance)
    }
}

#[derive(Args)]
struct InspectOpts {
    /// Raw source vertex id as it appears in the edge list
    #[arg(long, value_name = "U64")]
    src: Option<String>,
    /// Raw destination vertex id as it appears in the edge list
    #[arg(long, value_name = "U64")]
    dst: Option<String>,
    /// Snapshot index, 1-based; intensities need at least 2
    #[arg(long, value_name = "USIZE")]
    snapshot: Option<String>,
    /// Historical snapshots visible to the excitation sum [default: 5]
    #[arg(long, value_name = "USIZE")]
    window: Option<String>,
}

impl Apply for InspectOpts {
    fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        maybe_set(cfg, "src", &self.src)?;
        maybe_set(cfg, "dst", &self.dst)?;
        maybe_set(cfg, "snapshot", &self.snapshot)?;
        maybe_set(cfg, "window", &self.window)
    }
}

#[derive(Args)]
struct TrainCmd {
    #[command(flatten)]
    common: CommonOpts,
    #[command(flatten)]
    net: NetOpt,
    #[command(flatten)]
    interval: IntervalOpt,
    #[command(flatten)]
    dim: DimOpt,
    #[command(flatten)]
    train: TrainOpts,
}

#[derive(Args)]
struct EvalCmd {
    #[command(flatten)]
    common: CommonOpts,
    #[command(flatten)]
    net: NetOpt,
    #[command(flatten)]
    interval: IntervalOpt,
    #[command(flatten)]
    model: ModelOpt,
    #[command(flatten)]
    dim: DimOpt,
    #[command(flatten)]
    eval: EvalOpts,
}

#[derive(Args)]
struct GenerateCmd {
    #[command(flatten)]
    common: CommonOpts,
    #[command(flatten)]
    interval: IntervalOpt,
    #[command(flatten)]
    gen: GenOpts,
}

#[derive(Args)]
struct GradcheckCmd {
    #[command(flatten)]
    common: CommonOpts,
    #[command(flatten)]
    dim: DimOpt,
    #[command(flatten)]
    train: TrainOpts,
    #[command(flatten)]
    check: CheckOpts,
}

#[derive(Args)]
struct SweepCmd {
    #[command(flatten)]
    common: CommonOpts,
    #[command(flatten)]
    net: NetOpt,
    #[command(flatten)]
    interval: IntervalOpt,
    #[command(flatten)]
    dim: DimOpt,
    #[command(flatten)]
    train: TrainOpts,
    #[command(flatten)]
    eval: EvalOpts,
    #[command(flatten)]
    sweep: SweepOpts,
}

#[derive(Args)]
struct InspectCmd {
    #[command(flatten)]
    common: CommonOpts,
    #[command(flatten)]
    net: NetOpt,
    #[command(flatten)]
    interval: IntervalOpt,
    #[command(flatten)]
    model: ModelOpt,
    #[command(flatten)]
    ins: InspectOpts,
}

/// Defaults, then config file, then flags in declaration order.
fn resolve(common: &CommonOpts, groups: &[&dyn Apply]) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &common.config {
        if !path.is_file() {
            return Err(DhprepError::Validation(format!(
                "config file not found: {}",
                path.display()
            )));
        }
        let text = std::fs::read_to_string(path)?;
        cfg.load_file(&text)?;
    }
    for group in groups {
        group.apply(&mut cfg)?;
    }
    common.apply(&mut cfg)?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<i32> {
    match &cli.command {
        Command::Train(c) => {
            let cfg = resolve(&c.common, &[&c.net, &c.interval, &c.dim, &c.train])?;
            commands::cmd_train(&cfg)
        }
        Command::Eval(c) => {
            let cfg = resolve(
                &c.common,
                &[&c.net, &c.interval, &c.model, &c.dim, &c.eval],
            )?;
            commands::cmd_eval(&cfg)
        }
        Command::Generate(c) => {
            let cfg = resolve(&c.common, &[&c.interval, &c.gen])?;
            commands::cmd_generate(&cfg)
        }
        Command::Gradcheck(c) => {
            let cfg = resolve(&c.common, &[&c.dim, &c.train, &c.check])?;
            commands::cmd_gradcheck(&cfg)
        }
        Command::Sweep(c) => {
            let cfg = resolve(
                &c.common,
                &[&c.net, &c.interval, &c.dim, &c.train, &c.eval, &c.sweep],
            )?;
            commands::cmd_sweep(&cfg)
        }
        Command::Inspect(c) => {
            let cfg = resolve(&c.common, &[&c.net, &c.interval, &c.model, &c.ins])?;
            commands::cmd_inspect(&cfg)
        }
    }
}

/// Usage and validation problems exit 2; runtime failures exit 1.
fn error_code(err: &DhprepError) -> u8 {
    match err {
        DhprepError::Parse { .. } | DhprepError::Validation(_) | DhprepError::Checkpoint(_) => 2,
        DhprepError::Io(_)
        | DhprepError::SamplingExhausted { .. }
        | DhprepError::Divergence { .. } => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(error_code(&err))
        }
    }
}
