use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use contiqa::trainer::Method;
use contiqa_cli::{commands, RunConfig};

/// Continual learning experiments for quality prediction.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic datasets and manifest.
    Gen {
        /// Run config (JSON); defaults apply to anything omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Data seed; defaults to the first configured seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and evaluate methods over seeds.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated method names, overriding the config.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<Method>>,
        /// Comma-separated seeds, overriding the config.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize metrics documents into a table and a PSR plot.
    Report {
        /// Output directory of a run, or a directory of metrics documents.
        #[arg(long)]
        dir: PathBuf,
        /// Where to write report.txt and psr.svg; defaults to --dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a checkpoint's heads, summaries and norms.
    Inspect {
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

fn load(config: Option<&Path>) -> Result<RunConfig> {
    match config {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("CONTIQA_LOG", "info"))
        .init();
    match Cli::parse().command {
        Command::Gen { config, seed, out } => {
            let config = load(config.as_deref())?;
            let seed = seed.unwrap_or(config.seeds[0]);
            let files = commands::gen(&config, seed, &out)?;
            println!("wrote {} files to {}", files.len(), out.display());
        }
        Command::Run {
            config,
            methods,
            seeds,
            out,
        } => {
            let mut config = load(config.as_deref())?;
            if let Some(m) = methods {
                config.methods = m;
            }
            if let Some(s) = seeds {
                config.seeds = s;
            }
            let files = commands::run(&config, &out).context("run failed")?;
            println!("wrote {} files to {}", files.len(), out.display());
        }
        Command::Report { dir, out } => {
            let out = out.unwrap_or_else(|| dir.clone());
            let (table, files) = commands::report(&dir, &out)?;
            print!("{table}");
            for f in files {
                println!("wrote {}", f.display());
            }
        }
        Command::Inspect { checkpoint } => print!("{}", commands::inspect(&checkpoint)?),
    }
    Ok(())
}
