//! `span`: synthetic data generation, training, evaluation, prediction and
//! lattice visualization for the paragraph recognizer.

mod config;
mod visualize;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use span_core::data::{generate_synthetic, load_image_input, SyntheticSpec};
use span_core::model::Checkpoint;
use span_core::train::{evaluate_checkpoint, train, transcribe, ModelSize, Regime};

use crate::config::FileConfig;

#[derive(Parser, Debug)]
#[command(name = "span", version, about = "Segmentation-free paragraph text recognition")]
struct Cli {
    /// Seed for every random choice of the command.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML file with `seed`, `threads`, `[train]` and `[synthetic]` keys;
    /// flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Worker threads for image loading.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Verbosity::Info)]
    verbosity: Verbosity,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Verbosity {
    Quiet,
    Error,
    Warn,
    Info,
    Debug,
    Trace,
}

impl Verbosity {
    fn filter(self) -> log::LevelFilter {
        match self {
            Verbosity::Quiet => log::LevelFilter::Off,
            Verbosity::Error => log::LevelFilter::Error,
            Verbosity::Warn => log::LevelFilter::Warn,
            Verbosity::Info => log::LevelFilter::Info,
            Verbosity::Debug => log::LevelFilter::Debug,
            Verbosity::Trace => log::LevelFilter::Trace,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a synthetic paragraph dataset (PNG pages + manifest).
    Generate(GenerateArgs),
    /// Train one of the five regimes.
    Train(TrainArgs),
    /// Score a checkpoint on a manifest.
    Eval(EvalArgs),
    /// Print the transcription of one image.
    Predict(PredictArgs),
    /// Draw non-blank lattice cells over the input and list row texts.
    Visualize(VisualizeArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Generator parameters in TOML; built-in defaults when absent.
    #[arg(long, value_name = "FILE")]
    spec: Option<PathBuf>,
    #[arg(long)]
    count: usize,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long, value_parser = parse_regime)]
    regime: Option<Regime>,
    /// Training manifest.
    #[arg(long, value_name = "MANIFEST")]
    data: Option<PathBuf>,
    /// Validation manifest.
    #[arg(long, value_name = "MANIFEST")]
    val: Option<PathBuf>,
    /// Initialization checkpoint (required by span-pt-r and span-pt-ra).
    #[arg(long, value_name = "CKPT")]
    init: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    model_size: Option<ModelSizeArg>,
    #[arg(long)]
    max_steps: Option<u64>,
    #[arg(long, value_name = "SECONDS")]
    max_wall_time: Option<f64>,
    /// Stop once the validation CER is at or below this value.
    #[arg(long)]
    target_cer: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    eval_every: Option<u64>,
    /// Symbols of the charset (inferred from the data when absent).
    #[arg(long)]
    charset: Option<String>,
    #[arg(long)]
    no_augment: bool,
    #[arg(long)]
    no_dropout: bool,
    /// Transfer only encoder weights from --init.
    #[arg(long)]
    encoder_only: bool,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum ModelSizeArg {
    Full,
    Reduced,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long, value_name = "FILE")]
    ckpt: PathBuf,
    #[arg(long, value_name = "MANIFEST")]
    data: PathBuf,
    /// JSON report path (default: report.json next to the checkpoint).
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long, value_name = "FILE")]
    ckpt: PathBuf,
    #[arg(long, value_name = "FILE")]
    image: PathBuf,
}

#[derive(Args, Debug)]
struct VisualizeArgs {
    #[arg(long, value_name = "FILE")]
    ckpt: PathBuf,
    #[arg(long, value_name = "FILE")]
    image: PathBuf,
    /// RGBA overlay PNG, same size as the preprocessed input.
    #[arg(long, value_name = "PNG")]
    out: PathBuf,
    /// Row text file (default: the overlay path with `.rows.txt`).
    #[arg(long, value_name = "FILE")]
    rows: Option<PathBuf>,
    /// Also write the overlay blended onto the input.
    #[arg(long, value_name = "PNG")]
    composite: Option<PathBuf>,
}

fn parse_regime(s: &str) -> Result<Regime, String> {
    s.parse()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(cli.verbosity.filter())
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let seed = cli.seed.or(file.seed).unwrap_or(0);
    let threads = cli.threads.or(file.threads).unwrap_or(1).max(1);
    match cli.command {
        Command::Generate(args) => cmd_generate(args, &file, seed),
        Command::Train(args) => cmd_train(args, &file, seed, threads),
        Command::Eval(args) => cmd_eval(args, threads),
        Command::Predict(args) => cmd_predict(args),
        Command::Visualize(args) => visualize::cmd_visualize(&args.ckpt, &args.image, &args.out, args.rows.as_deref(), args.composite.as_deref()),
    }
}

fn usage_error(kind: ErrorKind, message: impl std::fmt::Display) -> ! {
    Cli::command().error(kind, message).exit()
}

fn cmd_generate(args: GenerateArgs, file: &FileConfig, seed: u64) -> Result<()> {
    let spec = match (&args.spec, &file.synthetic) {
        (Some(path), _) => SyntheticSpec::load(path).with_context(|| format!("loading spec {}", path.display()))?,
        (None, Some(spec)) => {
            spec.validate()?;
            spec.clone()
        }
        (None, None) => SyntheticSpec::default(),
    };
    info!("resolved configuration: seed = {seed}, count = {}\n{}", args.count, spec.to_toml());
    let manifest = generate_synthetic(&spec, args.count, seed, &args.out)?;
    println!("{}", manifest.display());
    Ok(())
}

fn cmd_train(args: TrainArgs, file: &FileConfig, seed: u64, threads: usize) -> Result<()> {
    let mut cfg = file.train.clone().unwrap_or_default();
    let file_has_regime = file.train_regime_set;
    match args.regime {
        Some(r) => cfg.regime = r,
        None if file_has_regime => {}
        None => usage_error(
            ErrorKind::MissingRequiredArgument,
            format!("--regime <NAME> is required; valid regimes: {}", Regime::valid_names()),
        ),
    }
    cfg.seed = seed;
    cfg.threads = threads;
    if args.data.is_some() {
        cfg.train_manifest = args.data;
    }
    if args.val.is_some() {
        cfg.val_manifest = args.val;
    }
    if args.init.is_some() {
        cfg.init = args.init;
    }
    if args.out.is_some() {
        cfg.out_dir = args.out;
    }
    if let Some(size) = args.model_size {
        cfg.model_size = match size {
            ModelSizeArg::Full => ModelSize::Full,
            ModelSizeArg::Reduced => ModelSize::Reduced,
        };
    }
    if let Some(v) = args.max_steps {
        cfg.max_steps = v;
    }
    if args.target_cer.is_some() {
        cfg.target_cer = args.target_cer;
    }
    if args.max_wall_time.is_some() {
        cfg.max_wall_time_s = args.max_wall_time;
    }
    if args.batch_size.is_some() {
        cfg.batch_size = args.batch_size;
    }
    if let Some(lr) = args.lr {
        cfg.adam.learning_rate = lr;
    }
    if let Some(v) = args.eval_every {
        cfg.eval_every = v;
    }
    if args.charset.is_some() {
        cfg.charset = args.charset;
    }
    if args.no_augment {
        cfg.augment = false;
    }
    if args.no_dropout {
        cfg.dropout = false;
    }
    if args.encoder_only {
        cfg.transfer = span_core::model::TransferMode::EncoderOnly;
    }
    if cfg.regime.requires_init() && cfg.init.is_none() {
        usage_error(
            ErrorKind::MissingRequiredArgument,
            format!("regime {} requires --init <CKPT> (a pretrained checkpoint)", cfg.regime),
        );
    }
    if cfg.train_manifest.is_none() {
        usage_error(ErrorKind::MissingRequiredArgument, "--data <MANIFEST> is required");
    }
    if cfg.out_dir.is_none() {
        usage_error(ErrorKind::MissingRequiredArgument, "--out <DIR> is required");
    }
    info!("resolved configuration:\n{}", cfg.to_toml());
    let outcome = train(&cfg)?;
    let out = cfg.out_dir.as_deref().unwrap_or(Path::new("."));
    match outcome.best_val_cer {
        Some(cer) => info!("{} steps, best validation CER {cer:.4}", outcome.steps),
        None => info!("{} steps", outcome.steps),
    }
    println!("{}", out.join("best.ckpt").display());
    Ok(())
}

fn cmd_eval(args: EvalArgs, threads: usize) -> Result<()> {
    let ckpt = Checkpoint::load(&args.ckpt).with_context(|| format!("loading {}", args.ckpt.display()))?;
    info!("resolved configuration: ckpt = {}, data = {}", args.ckpt.display(), args.data.display());
    let report = evaluate_checkpoint(&ckpt, &args.data, threads)?;
    if report.is_empty() {
        warn!("no samples evaluated");
    }
    let path = args.report.unwrap_or_else(|| args.ckpt.with_extension("report.json"));
    fs::write(&path, report.to_json()).with_context(|| format!("writing {}", path.display()))?;
    println!("{}", report.summary());
    info!("report written to {}", path.display());
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&args.ckpt).with_context(|| format!("loading {}", args.ckpt.display()))?;
    let stats = ckpt.header.normalization.clone().unwrap_or_else(span_core::data::NormStats::identity);
    let input = load_image_input(&args.image, &stats)?;
    let model = ckpt.to_model::<f32>()?;
    println!("{}", transcribe(&model, &ckpt.header.charset, &input)?);
    Ok(())
}
