mod commands;
mod config;
mod synth;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use crate::commands::{EvalArgs, PreprocessArgs, ScoreArgs, TrainArgs};
use crate::config::RunConfig;
use crate::synth::SynthCommand;

/// Masked-probe reconstruction anomaly detection for tabular data.
#[derive(Parser, Debug)]
#[command(name = "maskdiff", version)]
struct Cli {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for scoring and Monte-Carlo loops.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory for artifacts and default input locations.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit encodings, split, and write encoded train/test files.
    Preprocess(PreprocessArgs),
    /// Train the reconstruction network on normal rows.
    Train(TrainArgs),
    /// Score an encoded file with a trained model, the kernel estimator or kNN.
    Score(ScoreArgs),
    /// Compute ROC-AUC and PR-AUC of a score file.
    Eval(EvalArgs),
    /// Synthetic-data experiments.
    #[command(subcommand)]
    Synth(SynthCommand),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Preprocess(_) => "preprocess",
            Command::Train(_) => "train",
            Command::Score(_) => "score",
            Command::Eval(_) => "eval",
            Command::Synth(s) => s.name(),
        }
    }
}

/// Resolved global state shared by every command.
pub struct Ctx {
    pub cfg: RunConfig,
    pub out_dir: PathBuf,
}

impl Ctx {
    pub fn out(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        anyhow::ensure!(n > 0, "--threads must be positive");
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let cfg = cfg.resolve(cli.seed).context("invalid configuration")?;
    std::fs::create_dir_all(&cli.out_dir)
        .with_context(|| format!("creating output directory {}", cli.out_dir.display()))?;
    let ctx = Ctx {
        cfg,
        out_dir: cli.out_dir,
    };
    match cli.command {
        Command::Preprocess(a) => commands::preprocess(&ctx, a),
        Command::Train(a) => commands::train(&ctx, a),
        Command::Score(a) => commands::score(&ctx, a),
        Command::Eval(a) => commands::eval(&ctx, a),
        Command::Synth(s) => synth::run(&ctx, s),
    }
}

/// Joins the error chain, skipping causes already quoted by their parent.
fn error_chain(e: &anyhow::Error) -> String {
    let mut parts: Vec<String> = Vec::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !parts.last().is_some_and(|p| p.contains(&msg)) {
            parts.push(msg);
        }
    }
    parts.join(": ")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = cli.command.name();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({
                "status": "error",
                "command": command,
                "error": error_chain(&e),
            });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
