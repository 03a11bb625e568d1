//! `seqguard` — config-driven driver for the backdoor attack/defense
//! laboratory. One TOML file describes an experiment; `run` executes the four
//! stages in order (resuming past completed ones), and each stage is also a
//! standalone subcommand for stepping through by hand.
//!
//! Exit codes: 0 on success, 1 when the config fails validation (every
//! problem listed, nothing written), 2 when a stage fails at runtime.

mod config;
mod stages;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::PipelineConfig;
use stages::{Stage, StageError, STAGES};

#[derive(Parser)]
#[command(name = "seqguard", about = "Backdoor attack/defense experiments on toy seq2seq tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Parser)]
struct CommonArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Artifact directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run all stages in order, skipping stages whose marker file exists.
    Run {
        #[command(flatten)]
        common: CommonArgs,
        /// Stop after this stage.
        #[arg(long, value_enum)]
        stage: Option<Stage>,
    },
    /// Build the poisoned benchmark (benchmark.json, manifest.toml).
    BuildBench {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Train one forward model per ratio plus the backward model.
    Train {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Score the configured defenses and write verdicts and summaries.
    Defend {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Evaluate attacker and defender metrics into report.json / report.txt.
    Report {
        #[command(flatten)]
        common: CommonArgs,
    },
}

enum CliError {
    Validation(Vec<String>),
    Runtime(String),
}

impl From<StageError> for CliError {
    fn from(e: StageError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(problems)) => {
            for p in &problems {
                eprintln!("config error: {p}");
            }
            eprintln!(
                "{} problem{} found; nothing was written",
                problems.len(),
                if problems.len() == 1 { "" } else { "s" }
            );
            ExitCode::from(1)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run { common, stage } => run(&common, stage.unwrap_or(Stage::Report)),
        Command::BuildBench { common } => single_stage(&common, Stage::BuildBench),
        Command::Train { common } => single_stage(&common, Stage::Train),
        Command::Defend { common } => single_stage(&common, Stage::Defend),
        Command::Report { common } => single_stage(&common, Stage::Report),
    }
}

fn load_and_prepare(common: &CommonArgs) -> Result<PipelineConfig, CliError> {
    let config = PipelineConfig::load(&common.config).map_err(CliError::Validation)?;
    ensure_out_dir(&common.out)?;
    Ok(config)
}

fn ensure_out_dir(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", out.display())))
}

/// Runs the stage pipeline up to and including `last`. Completed stages are
/// recognized by their marker files and skipped, so an interrupted run picks
/// up where it stopped.
fn run(common: &CommonArgs, last: Stage) -> Result<(), CliError> {
    let config = load_and_prepare(common)?;
    for stage in STAGES {
        if stage > last {
            break;
        }
        if stage.is_done(&common.out) {
            println!("[{}] skipped (marker present)", stage.name());
            continue;
        }
        stage.execute(&config, &common.out)?;
    }
    Ok(())
}

/// Runs exactly one stage, redoing it even when its marker exists: asking for
/// a stage by name is an explicit request to rebuild its artifacts.
fn single_stage(common: &CommonArgs, stage: Stage) -> Result<(), CliError> {
    let config = load_and_prepare(common)?;
    stage.execute(&config, &common.out)?;
    Ok(())
}
