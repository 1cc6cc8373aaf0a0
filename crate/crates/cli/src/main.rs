//! `qoqa`: index a corpus, optimize queries, evaluate and compare runs.

mod artifacts;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use commands::{evaluate, index, optimize, report};
use config::Tunables;

#[derive(Debug, Parser)]
#[command(name = "qoqa", version, about = "Retrieval-aligned query optimization")]
struct Cli {
    /// TOML file of key = value settings; flags take precedence
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// More log output (-v info, -vv debug)
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the sparse index and, optionally, the dense store
    Index {
        #[command(flatten)]
        args: index::IndexArgs,
        /// Worker threads [default: available cores]
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Optimize every query; resumes from an existing output file
    Optimize {
        #[command(flatten)]
        args: optimize::OptimizeArgs,
        #[command(flatten)]
        tunables: Tunables,
    },
    /// Retrieve with original and optimized queries and compare nDCG
    Evaluate {
        #[command(flatten)]
        args: evaluate::EvaluateArgs,
        #[command(flatten)]
        tunables: Tunables,
    },
    /// Compare existing run files and summarize traces
    Report {
        #[command(flatten)]
        args: report::ReportArgs,
    },
}

fn file_tunables(cli: &Cli) -> Result<Tunables> {
    match &cli.config {
        Some(path) => Tunables::load_file(path),
        None => Ok(Tunables::default()),
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let file = file_tunables(&cli)?;
    match cli.command {
        Command::Index { args, jobs } => {
            let jobs = Tunables {
                jobs,
                ..Default::default()
            }
            .overlay(file)
            .jobs();
            index::run(&args, jobs)?;
        }
        Command::Optimize { args, tunables } => {
            let failed = optimize::run(&args, &tunables.overlay(file))?;
            if failed > 0 {
                eprintln!("error: {failed} queries failed; re-run to retry them");
                return Ok(ExitCode::from(2));
            }
        }
        Command::Evaluate { args, tunables } => {
            let cmp = evaluate::run(&args, &tunables.overlay(file))?;
            print!("{}", cmp.to_table());
        }
        Command::Report { args } => print!("{}", report::run(&args)?),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
