//! Command-line pipeline: `train-expert → record → bc → train → eval`.

pub mod config;

use std::io::Write;
use std::path::{Path, PathBuf};

use ailsrs_core::demo_io::{
    load_policy, load_trajectories, record, save_policy, save_trajectories,
};
use ailsrs_core::envs::evaluate;
use ailsrs_core::policy::{bc_closed_form, bc_fit};
use ailsrs_core::trainer::write_metrics_csv;
use ailsrs_core::{
    train_ailsrs, train_expert, ArsConfig, BcFitConfig, Env, EnvKind, Executor, Rng,
};
use clap::{Args, Parser, Subcommand};

pub use config::CliConfig;

/// Worker-count override for rollouts; `0` runs serially.
pub const THREADS_ENV: &str = "AILSRS_THREADS";

/// Seed of the stream used for minibatch shuffling in `bc`.
const BC_STREAM: u64 = 0xBC;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] ailsrs_core::Error),
}

impl CliError {
    /// `2` for usage and configuration problems, `1` for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Io(_) | CliError::Core(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "ailsrs",
    version,
    about = "Adversarial imitation learning with augmented random search"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train an expert with plain ARS on the environment reward.
    TrainExpert(TrainExpertArgs),
    /// Record demonstrations from a saved policy.
    Record(RecordArgs),
    /// Behavior cloning from demonstrations.
    Bc(BcArgs),
    /// Adversarial imitation from demonstrations.
    Train(TrainArgs),
    /// Evaluate a saved policy on the environment reward.
    Eval(EvalArgs),
}

fn parse_env(s: &str) -> Result<EnvKind, String> {
    s.parse::<EnvKind>().map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
pub struct TrainExpertArgs {
    #[arg(long, value_parser = parse_env)]
    pub env: EnvKind,
    #[arg(long)]
    pub iters: usize,
    #[arg(long, default_value_t = 8)]
    pub n_dirs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = ArsConfig::default().alpha)]
    pub alpha: f64,
    #[arg(long, default_value_t = ArsConfig::default().nu)]
    pub nu: f64,
    /// Episodes for the final evaluation.
    #[arg(long, default_value_t = 100)]
    pub eval_episodes: usize,
    #[arg(long, default_value_t = 0)]
    pub eval_seed: u64,
}

#[derive(Debug, Args)]
pub struct RecordArgs {
    #[arg(long, value_parser = parse_env)]
    pub env: EnvKind,
    #[arg(long)]
    pub policy: PathBuf,
    #[arg(long)]
    pub episodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BcArgs {
    #[arg(long)]
    pub demos: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Closed-form ridge regression instead of Adam.
    #[arg(long, conflicts_with_all = ["epochs", "lr", "batch_size"])]
    pub ridge: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub eval_episodes: usize,
    #[arg(long, default_value_t = 0)]
    pub eval_seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_parser = parse_env)]
    pub env: EnvKind,
    #[arg(long)]
    pub demos: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Starting policy, e.g. the output of `bc`.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub metrics: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Stop once an evaluation reaches this fraction of the demonstrations' return.
    #[arg(long)]
    pub target_frac: Option<f64>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub n_dirs: Option<usize>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    #[arg(long)]
    pub eval_episodes: Option<usize>,
    /// Also save the final discriminator.
    #[arg(long)]
    pub disc_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_parser = parse_env)]
    pub env: EnvKind,
    #[arg(long)]
    pub policy: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub episodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Reads [`THREADS_ENV`]; when unset, uses every available core.
pub fn executor_from_env() -> Result<Executor, CliError> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v.trim().parse::<usize>().map_err(|_| {
            CliError::Usage(format!(
                "{THREADS_ENV} must be a non-negative integer, got `{v}`"
            ))
        })?,
        Err(_) => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    if threads <= 1 {
        return Ok(Executor::Serial);
    }
    Ok(Executor::with_threads(threads)?)
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::TrainExpert(args) => cmd_train_expert(&args, out),
        Command::Record(args) => cmd_record(&args, out),
        Command::Bc(args) => cmd_bc(&args, out),
        Command::Train(args) => cmd_train(&args, out),
        Command::Eval(args) => cmd_eval(&args, out),
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

fn report(out: &mut dyn Write, line: String) -> Result<(), CliError> {
    writeln!(out, "{line}").map_err(|e| CliError::Io(e.to_string()))
}

fn format_eval(mean: f64, std: f64) -> String {
    format!("{mean:.6} ± {std:.6}")
}

pub fn cmd_train_expert(args: &TrainExpertArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let env = Env::new(args.env);
    let ars = ArsConfig {
        alpha: args.alpha,
        nu: args.nu,
        n_directions: args.n_dirs,
    };
    let executor = executor_from_env()?;
    let (policy, normalizer) = train_expert(&env, &ars, args.iters, args.seed, &executor)?;
    save_policy(args.env, &policy, &normalizer, &args.out)?;
    let eval = evaluate(
        &policy,
        &normalizer,
        &env,
        args.eval_episodes,
        args.eval_seed,
    )?;
    report(
        out,
        format!("eval return {}", format_eval(eval.mean, eval.std)),
    )
}

pub fn cmd_record(args: &RecordArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let file = load_policy(&args.policy, Some(args.env))?;
    let env = Env::new(args.env);
    let set = record(
        &file.policy,
        &file.normalizer,
        &env,
        args.episodes,
        args.seed,
    )?;
    save_trajectories(&set, &args.out)?;
    report(
        out,
        format!(
            "recorded {} episodes, mean return {:.6}",
            set.len(),
            set.mean_env_return()
        ),
    )
}

pub fn cmd_bc(args: &BcArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let demos = load_trajectories(&args.demos)?;
    let kind: EnvKind = demos.env_name.parse()?;
    let dataset = demos.bc_dataset();
    let normalizer = demos.state_normalizer()?;
    let policy = match args.ridge {
        Some(ridge) => bc_closed_form(&dataset, &normalizer, ridge)?,
        None => {
            let defaults = BcFitConfig::default();
            let cfg = BcFitConfig {
                epochs: args.epochs.unwrap_or(defaults.epochs),
                lr: args.lr.unwrap_or(defaults.lr),
                batch_size: args.batch_size,
            };
            bc_fit(
                &dataset,
                &normalizer,
                &cfg,
                &mut Rng::new(args.seed, &[BC_STREAM]),
            )?
        }
    };
    save_policy(kind, &policy, &normalizer, &args.out)?;
    let eval = evaluate(
        &policy,
        &normalizer,
        &Env::new(kind),
        args.eval_episodes,
        args.eval_seed,
    )?;
    report(
        out,
        format!("eval return {}", format_eval(eval.mean, eval.std)),
    )
}

pub fn cmd_train(args: &TrainArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let demos = load_trajectories(&args.demos)?;
    let env = Env::new(args.env);
    demos.check_env(env.spec())?;
    let file_cfg = match &args.config {
        Some(path) => CliConfig::load(path)?,
        None => CliConfig::default(),
    };
    let flags = CliConfig {
        seed: args.seed,
        target_frac: args.target_frac,
        max_iterations: args.iters,
        n_directions: args.n_dirs,
        eval_every: args.eval_every,
        eval_episodes: args.eval_episodes,
        ..Default::default()
    };
    // The demonstrations' own return is only a stopping reference; it never reaches an update.
    let cfg = file_cfg
        .merged(&flags)
        .to_trainer_config(demos.mean_env_return());
    let init = match &args.init {
        Some(path) => {
            let file = load_policy(path, Some(args.env))?;
            Some((file.policy, file.normalizer))
        }
        None => None,
    };
    let executor = executor_from_env()?;
    let run = train_ailsrs(&env, &demos, &cfg, init, &executor)?;
    save_policy(args.env, &run.policy, &run.normalizer, &args.out)?;
    let metrics = std::fs::File::create(&args.metrics).map_err(io_err(&args.metrics))?;
    let mut metrics = std::io::BufWriter::new(metrics);
    write_metrics_csv(&run.metrics, &mut metrics).map_err(io_err(&args.metrics))?;
    metrics.flush().map_err(io_err(&args.metrics))?;
    if let Some(path) = &args.disc_out {
        ailsrs_core::demo_io::save_discriminator(&run.disc, path)?;
    }
    let iterations = run.metrics.len();
    match run.last_eval() {
        Some((mean, std)) => report(
            out,
            format!(
                "{iterations} iterations, eval return {}",
                format_eval(mean, std)
            ),
        ),
        None => report(out, format!("{iterations} iterations")),
    }
}

pub fn cmd_eval(args: &EvalArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let file = load_policy(&args.policy, Some(args.env))?;
    let eval = evaluate(
        &file.policy,
        &file.normalizer,
        &Env::new(args.env),
        args.episodes,
        args.seed,
    )?;
    report(out, format_eval(eval.mean, eval.std))
}
