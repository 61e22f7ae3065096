//! `vvkrein`: build V-variable trees, discretize their measures and study
//! the spectral asymptotics of the associated Krein-Feller operators.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Instant, SystemTime};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use crate::commands::InvalidConfig;
use crate::config::RunConfig;
use crate::output::OutDir;

#[derive(Debug, Parser)]
#[command(name = "vvkrein", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Overrides the output directory in the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Caps the number of worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Check the catalog and report violations.
    Validate,
    /// Build the tree; dump nodes as JSONL and the neck table.
    Tree,
    /// Write the level-n cell decomposition as CSV.
    Measure,
    /// Dirichlet and Neumann counting functions on the grid.
    Count,
    /// Spectral exponent: exact, Monte Carlo, recursive and empirical.
    Exponent,
    /// Dirichlet-Neumann bracketing across cut sets.
    Bracket,
    /// Cut-set statistics against the counting function.
    Cutsets,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Tree => "tree",
            Command::Measure => "measure",
            Command::Count => "count",
            Command::Exponent => "exponent",
            Command::Bracket => "bracket",
            Command::Cutsets => "cutsets",
        }
    }
}

fn run(cli: &Cli) -> Result<String> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| InvalidConfig("--config PATH is required".into()))?;
    let mut config = RunConfig::load(path).map_err(|e| InvalidConfig(format!("{e:#}")))?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output = out.clone();
    }
    let threads = cli.threads.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .context("starting worker pool")?;
    let mut out = OutDir::create(&config.output)?;
    let started = SystemTime::now();
    let clock = Instant::now();
    let command = cli.command;
    let summary = pool.install(|| match command {
        Command::Validate => commands::validate(&config, &mut out),
        Command::Tree => commands::tree_cmd(&config, &mut out),
        Command::Measure => commands::measure(&config, &mut out),
        Command::Count => commands::count(&config, &mut out),
        Command::Exponent => commands::exponent(&config, &mut out),
        Command::Bracket => commands::bracket(&config, &mut out),
        Command::Cutsets => commands::cutsets(&config, &mut out),
    })?;
    out.sidecar(command.name(), started, clock.elapsed(), pool.current_num_threads())?;
    let files: Vec<String> = out.written().iter().map(|p| p.display().to_string()).collect();
    Ok(format!("{summary}\nwrote {}", files.join(", ")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) if e.downcast_ref::<InvalidConfig>().is_some() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
