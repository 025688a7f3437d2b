//! Command-line pipeline driver.
//!
//! Stages write into one output directory and validate their inputs by
//! content hash, so a stale or hand-edited artifact is refused instead of
//! silently reused. All randomness flows from the manifest's master seed
//! (set at `synth` time, overridable per stage with --seed).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use subgnn::anchors::PoolConfig;
use subgnn::model::ChannelSet;
use subgnn::pipeline::{
    stage_ablate, stage_eval, stage_import, stage_pools, stage_precompute, stage_pretrain,
    stage_report, stage_synth, stage_train, PipelineError, StageResult,
};
use subgnn::pretrain::PretrainConfig;
use subgnn::similarity::DtwNormalization;
use subgnn::synth::{Split, SynthConfig, Task};
use subgnn::train::{format_mean_std, LossKind, RunConfig};

#[derive(Parser)]
#[command(
    name = "subgnn",
    version,
    about = "Subgraph representation learning pipeline",
    propagate_version = true
)]
struct Cli {
    /// JSON config file; sections {"synth","pretrain","pool","run"} replace
    /// the built-in defaults, and explicit flags override file values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Stage seed override (defaults to the manifest's master seed; for
    /// `synth` it becomes the master seed).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Pipeline output directory.
    #[arg(long, global = true, default_value = "run", value_name = "DIR")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic benchmark dataset (or import one with
    /// --task custom --dataset DIR).
    Synth(SynthArgs),
    /// Pretrain node embeddings on the base graph via link prediction.
    Pretrain(PretrainArgs),
    /// Sample the per-subchannel anchor-patch pools.
    Pools(PoolsArgs),
    /// Precompute channel similarities for every (component, patch) pair.
    Precompute(PrecomputeArgs),
    /// Train a model; writes a checkpoint and a run report.
    Train(RunArgs),
    /// Train the P / N / S / PNS ablation arms on shared seeds.
    Ablate(AblateArgs),
    /// Evaluate a checkpoint (or a freshly initialized model) on one split.
    Eval(EvalArgs),
    /// Render every collected report as one comparison table.
    Report,
}

#[derive(Args)]
struct SynthArgs {
    /// Benchmark task.
    #[arg(long, value_parser = parse_task, default_value = "density")]
    task: TaskChoice,
    /// Externally built dataset directory (required for --task custom).
    #[arg(long, value_name = "DIR")]
    dataset: Option<PathBuf>,
    #[arg(long)]
    num_subgraphs: Option<usize>,
    #[arg(long)]
    base_nodes: Option<usize>,
    #[arg(long)]
    subgraph_size: Option<usize>,
}

#[derive(Clone)]
enum TaskChoice {
    Builtin(Task),
    Custom,
}

fn parse_task(s: &str) -> Result<TaskChoice, String> {
    match s {
        "density" => Ok(TaskChoice::Builtin(Task::Density)),
        "cut_ratio" => Ok(TaskChoice::Builtin(Task::CutRatio)),
        "coreness" => Ok(TaskChoice::Builtin(Task::Coreness)),
        "component" => Ok(TaskChoice::Builtin(Task::Component)),
        "custom" => Ok(TaskChoice::Custom),
        other => Err(format!(
            "unknown task {other:?} (expected density, cut_ratio, coreness, component, custom)"
        )),
    }
}

#[derive(Args)]
struct PretrainArgs {
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Negatives sampled per positive edge.
    #[arg(long)]
    neg_ratio: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
}

#[derive(Args)]
struct PoolsArgs {
    /// Patches pre-sampled per subchannel pool.
    #[arg(long)]
    pool_size: Option<usize>,
    /// Border neighborhood radius.
    #[arg(long)]
    k_hops: Option<usize>,
    #[arg(long)]
    walk_length: Option<usize>,
    #[arg(long)]
    num_walks: Option<usize>,
    /// Triangle-closure probability for structure walks.
    #[arg(long)]
    beta: Option<f64>,
}

#[derive(Args)]
struct PrecomputeArgs {
    /// DTW cost scaling: path_length, max_length, or none.
    #[arg(long, value_parser = parse_norm, default_value = "path_length")]
    normalization: DtwNormalization,
}

fn parse_norm(s: &str) -> Result<DtwNormalization, String> {
    match s {
        "path_length" => Ok(DtwNormalization::PathLength),
        "max_length" => Ok(DtwNormalization::MaxLength),
        "none" => Ok(DtwNormalization::None),
        other => Err(format!(
            "unknown normalization {other:?} (expected path_length, max_length, none)"
        )),
    }
}

#[derive(Args)]
struct RunArgs {
    /// Enabled channels, e.g. "s", "pn", "pns".
    #[arg(long, value_parser = ChannelSet::parse)]
    channels: Option<ChannelSet>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    grad_clip: Option<f64>,
    /// Epochs without validation improvement before stopping.
    #[arg(long)]
    patience: Option<usize>,
    /// Comma-separated seed list, e.g. "0,1,2".
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long, value_parser = parse_loss)]
    loss: Option<LossKind>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    /// Draw anchors once and reuse them every epoch (default redraws
    /// per epoch).
    #[arg(long)]
    freeze_anchors: bool,
}

fn parse_loss(s: &str) -> Result<LossKind, String> {
    match s {
        "multiclass_ce" => Ok(LossKind::MulticlassCe),
        "multilabel_bce" => Ok(LossKind::MultilabelBce),
        other => Err(format!(
            "unknown loss {other:?} (expected multiclass_ce, multilabel_bce)"
        )),
    }
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Arms trained in parallel.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint to load; omit to evaluate a freshly initialized model.
    #[arg(long, value_name = "PATH")]
    checkpoint: Option<PathBuf>,
    #[arg(long, value_parser = parse_split, default_value = "test")]
    split: Split,
    /// Channels the checkpoint was trained with.
    #[arg(long, value_parser = ChannelSet::parse)]
    channels: Option<ChannelSet>,
}

fn parse_split(s: &str) -> Result<Split, String> {
    match s {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        "test" => Ok(Split::Test),
        other => Err(format!("unknown split {other:?} (expected train, val, test)")),
    }
}

/// Optional config-file sections; a present section replaces that stage's
/// built-in defaults before flag overrides apply.
#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    synth: Option<SynthConfig>,
    pretrain: Option<PretrainConfig>,
    pool: Option<PoolConfig>,
    run: Option<RunConfig>,
}

fn load_file_config(path: Option<&PathBuf>) -> StageResult<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let fail = |msg: String| PipelineError {
        stage: "config",
        msg,
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| fail(format!("cannot read {} ({e})", path.display())))?;
    serde_json::from_str(&text).map_err(|e| fail(format!("{}: {e}", path.display())))
}

macro_rules! override_with {
    ($dst:expr, $src:expr) => {
        if let Some(v) = $src {
            $dst = v;
        }
    };
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> StageResult<()> {
    let file = load_file_config(cli.config.as_ref())?;
    let out = &cli.out;
    match cli.command {
        Command::Synth(args) => {
            let task = match (&args.task, &args.dataset) {
                (TaskChoice::Custom, Some(src)) => {
                    let dir = stage_import(out, src, cli.seed.unwrap_or(0))?;
                    println!("imported dataset -> {}", dir.display());
                    return Ok(());
                }
                (TaskChoice::Custom, None) => {
                    return Err(PipelineError {
                        stage: "synth",
                        msg: "--task custom needs --dataset DIR pointing at a dataset \
                              directory in the synth output format"
                            .into(),
                    })
                }
                (TaskChoice::Builtin(task), _) => *task,
            };
            let mut cfg = match file.synth {
                // A config file fixes everything except explicit flags.
                Some(mut from_file) => {
                    from_file.task = task;
                    from_file
                }
                None => SynthConfig::for_task(task, cli.seed.unwrap_or(0)),
            };
            override_with!(cfg.seed, cli.seed);
            override_with!(cfg.num_subgraphs, args.num_subgraphs);
            override_with!(cfg.base_nodes, args.base_nodes);
            override_with!(cfg.subgraph_size, args.subgraph_size);
            let dir = stage_synth(out, &cfg)?;
            println!("dataset -> {}", dir.display());
        }
        Command::Pretrain(args) => {
            let mut cfg = file.pretrain.unwrap_or_default();
            override_with!(cfg.dim, args.dim);
            override_with!(cfg.epochs, args.epochs);
            override_with!(cfg.neg_ratio, args.neg_ratio);
            override_with!(cfg.lr, args.lr);
            let path = stage_pretrain(out, &cfg, cli.seed)?;
            println!("embeddings -> {}", path.display());
        }
        Command::Pools(args) => {
            let mut cfg = file.pool.unwrap_or_default();
            override_with!(cfg.pool_size, args.pool_size);
            override_with!(cfg.k_hops, args.k_hops);
            override_with!(cfg.walk.walk_length, args.walk_length);
            override_with!(cfg.walk.num_walks, args.num_walks);
            override_with!(cfg.walk.beta, args.beta);
            let path = stage_pools(out, &cfg, cli.seed)?;
            println!("pools -> {}", path.display());
        }
        Command::Precompute(args) => {
            let path = stage_precompute(out, args.normalization)?;
            println!("similarity cache -> {}", path.display());
        }
        Command::Train(args) => {
            let cfg = run_config(file.run, args);
            let report = stage_train(out, &cfg)?;
            println!(
                "test micro-F1 {}  AUROC {}",
                format_mean_std(report.mean.test.micro_f1, report.std.test.micro_f1),
                format_mean_std(report.mean.test.auroc, report.std.test.auroc),
            );
        }
        Command::Ablate(args) => {
            let jobs = args.jobs;
            let cfg = run_config(file.run, args.run);
            let table = stage_ablate(out, &cfg, jobs)?;
            print!("{}", table.to_text());
        }
        Command::Eval(args) => {
            let mut cfg = file.run.unwrap_or_default();
            override_with!(cfg.channel.channels, args.channels);
            let report = stage_eval(out, &cfg, args.checkpoint.as_deref(), args.split, cli.seed)?;
            println!(
                "{} micro-F1 {:.3}  AUROC {:.3}",
                args.split.as_str(),
                report.metrics.micro_f1,
                report.metrics.auroc
            );
        }
        Command::Report => {
            let table = stage_report(out)?;
            print!("{table}");
        }
    }
    Ok(())
}

fn run_config(base: Option<RunConfig>, args: RunArgs) -> RunConfig {
    let mut cfg = base.unwrap_or_default();
    override_with!(cfg.channel.channels, args.channels);
    override_with!(cfg.epochs, args.epochs);
    override_with!(cfg.batch_size, args.batch_size);
    override_with!(cfg.lr, args.lr);
    override_with!(cfg.grad_clip, args.grad_clip);
    override_with!(cfg.patience, args.patience);
    override_with!(cfg.seeds, args.seeds);
    override_with!(cfg.loss, args.loss);
    override_with!(cfg.channel.layers, args.layers);
    override_with!(cfg.channel.hidden_dim, args.hidden_dim);
    override_with!(cfg.channel.dropout, args.dropout);
    if args.freeze_anchors {
        cfg.channel.resample_each_epoch = false;
    }
    cfg
}
