//! `rtqa`: toy-world generation, model training, roundtrip-filtered data
//! synthesis, staged QA training, learning curves and evaluation.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Failures, grouped by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, unknown config keys, invalid values (exit 2).
    Usage(String),
    /// Unreadable, malformed or incompatible inputs (exit 3).
    Data(String),
    Core(rtqa::Error),
}

impl From<rtqa::Error> for CliError {
    fn from(e: rtqa::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Core(rtqa::Error::Contract(_)) => 2,
            CliError::Core(rtqa::Error::Numeric(_)) => 4,
            CliError::Data(_) | CliError::Core(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

#[derive(Parser)]
#[command(name = "rtqa", version, about = "Roundtrip-consistent synthetic QA data on a toy world")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
pub struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override any configuration key, e.g. `--set qa_train.epochs=4`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// `span-exact` or `text-normalized`.
    #[arg(long, global = true)]
    pub match_mode: Option<String>,
    /// Weight of the roundtrip term; positive values train with the
    /// combined objective.
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    /// `log` or `margin`.
    #[arg(long, global = true)]
    pub beta_variant: Option<String>,
    #[arg(long, global = true)]
    pub k_top: Option<usize>,
    #[arg(long, global = true)]
    pub negatives_ratio: Option<f64>,
    /// Comma-separated synthetic-set sizes of the learning curve.
    #[arg(long, global = true)]
    pub sizes: Option<String>,
    /// Comma-separated arms: `rt`, `no-rt`.
    #[arg(long, global = true)]
    pub arms: Option<String>,
}

impl Common {
    /// Overrides in application order: `--set` pairs, then dedicated flags.
    fn overrides(&self) -> Result<Vec<(String, String)>, CliError> {
        let mut out = Vec::new();
        for s in &self.set {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {s:?}")))?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        let mut flag = |key: &str, v: Option<String>| {
            if let Some(v) = v {
                out.push((key.to_string(), v));
            }
        };
        flag("seed", self.seed.map(|s| s.to_string()));
        flag("pipeline.match_mode", self.match_mode.clone());
        flag("beta.lambda", self.lambda.map(|l| l.to_string()));
        flag("beta.shape", self.beta_variant.clone());
        flag("pipeline.k_top", self.k_top.map(|k| k.to_string()));
        flag("pipeline.negatives_ratio", self.negatives_ratio.map(|r| r.to_string()));
        flag("curve_sizes", self.sizes.clone());
        flag("arms", self.arms.clone());
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Task {
    AnswerExtraction,
    Qgen,
    Qa,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::AnswerExtraction => "answer-extraction",
            Task::Qgen => "qgen",
            Task::Qa => "qa",
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Print the resolved configuration in the config-file format.
    ShowConfig,
    /// Generate a toy world: corpus.jsonl and vocab.txt.
    Toyworld,
    /// Train one model on the labeled split.
    Train {
        #[arg(long, value_enum)]
        task: Task,
        /// Directory holding corpus.jsonl and vocab.txt.
        #[arg(long)]
        data: PathBuf,
        /// Continue from a checkpoint of the same task.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Generate roundtrip-filtered triples from the unlabeled split.
    Synth {
        /// Directory holding the three task checkpoints.
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Train a QA model on synthetic data, then on labeled data.
    PretrainFinetune {
        #[arg(long)]
        synthetic: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Dev EM/F1 over synthetic-set sizes, arms and seeds. Without
    /// `--synthetic`, each curve seed builds its own world, models and data.
    Curve {
        #[arg(long, requires = "data")]
        synthetic: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Dev EM/F1 of a QA checkpoint.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = config::resolve(cli.common.config.as_deref(), &cli.common.overrides()?)?;
    if let Command::ShowConfig = cli.command {
        print!("{}", config::to_flat_text(&cfg));
        return Ok(());
    }
    let out = &cli.common.out;
    std::fs::create_dir_all(out).map_err(|e| CliError::Data(format!("cannot create {}: {e}", out.display())))?;
    let (name, files) = match cli.command {
        Command::ShowConfig => unreachable!(),
        Command::Toyworld => ("toyworld", commands::toyworld(&cfg, out)?),
        Command::Train { task, data, resume } => ("train", commands::train(&cfg, out, task, &data, resume.as_deref())?),
        Command::Synth { models, data } => ("synth", commands::synth(&cfg, out, &models, &data)?),
        Command::PretrainFinetune { synthetic, data } => {
            ("pretrain-finetune", commands::pretrain_finetune(&cfg, out, &synthetic, &data)?)
        }
        Command::Curve { synthetic, data } => ("curve", commands::curve(&cfg, out, synthetic.as_deref(), data.as_deref())?),
        Command::Eval { model, data } => ("eval", commands::eval(&cfg, out, &model, &data)?),
    };
    let m = manifest::write(out, name, &cfg, &files)?;
    log::info!("wrote {}", m.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rtqa: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
