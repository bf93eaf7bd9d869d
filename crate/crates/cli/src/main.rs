//! `ilbrl`: config-driven runner for the batch imitation-learning pipeline.

mod config;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Provenance;
use stages::{run_pipeline, run_stage, Context};

#[derive(Parser)]
#[command(name = "ilbrl", version, about = "Batch imitation-learning experiment runner")]
struct Cli {
    /// TOML experiment configuration.
    #[arg(long, global = true, default_value = "config.toml")]
    config: PathBuf,
    /// Master seed; overrides the config's `seed` when given.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Artifact directory; created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads for parallel sections (0 = library default).
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute every stage listed in the config, in order.
    Run,
    /// Sample an MDP, solve the expert, and roll out both datasets.
    GenerateData,
    /// Derive the indicator reward (and optional feature rewards).
    LabelRewards,
    /// Train the imitation policy with the phased offline solver.
    Train,
    /// Score the trained policy with expected-SARSA on held-out data.
    EvaluateOffline,
    /// Tune the evaluator offline and pick the best candidate policy.
    Select,
    /// Monte-Carlo check one of the closed-form guarantees.
    VerifyBounds,
    /// Aggregate scores into a robust summary and performance profile.
    Report,
}

impl Command {
    fn stage_name(&self) -> Option<&'static str> {
        match self {
            Command::Run => None,
            Command::GenerateData => Some("generate-data"),
            Command::LabelRewards => Some("label-rewards"),
            Command::Train => Some("train"),
            Command::EvaluateOffline => Some("evaluate-offline"),
            Command::Select => Some("select"),
            Command::VerifyBounds => Some("verify-bounds"),
            Command::Report => Some("report"),
        }
    }
}

fn run(cli: Cli) -> Result<(), String> {
    if cli.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.workers)
            .build_global()
            .map_err(|e| format!("cannot size worker pool: {e}"))?;
    }
    let (cfg, bytes) = config::load(&cli.config)?;
    let seed = cli.seed.unwrap_or(cfg.seed);
    std::fs::create_dir_all(&cli.out)
        .map_err(|e| format!("cannot create output dir {}: {e}", cli.out.display()))?;
    let ctx = Context {
        cfg,
        out: cli.out,
        seed,
        provenance: Provenance::new(&bytes, seed),
    };
    match cli.command.stage_name() {
        None => run_pipeline(&ctx),
        Some(stage) => run_stage(&ctx, stage),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
