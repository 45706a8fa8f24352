//! `nse`: driver for the stencil-emulator data-efficiency experiments.
//!
//! Subcommands mirror the pipeline phases (simulate, build-datasets, train,
//! evaluate, report) plus `full` for the whole chain. Exit codes: 0 success,
//! 1 configuration error, 2 numerical failure, 3 IO error.

mod config;
mod error;
mod manifest;
mod pipeline;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::Experiment;
use error::CliResult;
use pipeline::Ctx;

#[derive(Parser)]
#[command(
    name = "nse",
    version,
    about = "Neural stencil emulator experiment driver"
)]
struct Cli {
    /// Experiment configuration (TOML). Defaults reproduce the full study
    /// protocol when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Worker threads for independent jobs (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    /// Rebuild outputs even when they already exist.
    #[arg(long, global = true)]
    force: bool,

    /// Print the execution plan without running anything.
    #[arg(long, global = true)]
    dry_run: bool,

    /// Override the config's master seed.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run and store the reference simulations per (system, D) cell.
    Simulate,
    /// Build one stencil dataset per (system, D, strategy).
    BuildDatasets,
    /// Train one emulator per (system, D, strategy, train seed).
    Train,
    /// Roll out each trained emulator on held-out initial conditions.
    Evaluate,
    /// Aggregate rollout reports into summary tables.
    Report,
    /// The whole pipeline: simulate through report.
    Full,
}

fn run(cli: Cli) -> CliResult<()> {
    let exp = Experiment::load(cli.config.as_deref(), cli.seed)?;
    eprintln!(
        "config hash {} (master seed {})",
        &exp.config_hash[..12],
        exp.raw.master_seed
    );
    let ctx = Ctx {
        exp: &exp,
        force: cli.force,
        dry_run: cli.dry_run,
    };
    pipeline::prepare(&ctx)?;
    match cli.command {
        Command::Simulate => pipeline::cmd_simulate(&ctx),
        Command::BuildDatasets => pipeline::cmd_build_datasets(&ctx),
        Command::Train => pipeline::cmd_train(&ctx),
        Command::Evaluate => pipeline::cmd_evaluate(&ctx),
        Command::Report => pipeline::cmd_report(&ctx),
        Command::Full => pipeline::cmd_full(&ctx),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are successful exits; anything else is a
            // usage error and belongs to exit code 1.
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Some(n) = cli.jobs {
        // n = 0 falls back to rayon's automatic sizing.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
