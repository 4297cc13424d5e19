use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sidelink_aoi::expcli::{self, ExperimentConfig};
use sidelink_aoi::Error;

#[derive(Parser)]
#[command(name = "sidelink-exp", version, about = "Run and summarize sidelink AoI experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run every sweep point of a config (or of a manifest.json).
    Run {
        config: PathBuf,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Replace the config's seed list.
        #[arg(long, value_delimiter = ',')]
        seed_override: Option<Vec<u64>>,
        /// Output directory (defaults to the config's output_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config without running anything.
    Validate { config: PathBuf },
    /// Aggregate results.csv over seeds into summary.csv.
    Summarize {
        dir: PathBuf,
        /// Where summary.csv goes (defaults to DIR).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().cmd {
        Cmd::Run { config, jobs, seed_override, out } => {
            let issues = match expcli::validate(&config) {
                Ok(i) => i,
                Err(e) => {
                    eprintln!("{}: {e}", config.display());
                    return ExitCode::from(2);
                }
            };
            if !issues.is_empty() {
                for i in issues {
                    eprintln!("{}: {i}", config.display());
                }
                return ExitCode::from(2);
            }
            let mut cfg = match ExperimentConfig::load(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("{}: {e}", config.display());
                    return ExitCode::from(2);
                }
            };
            if let Some(seeds) = seed_override {
                cfg.seeds = seeds;
            }
            let out = out.unwrap_or_else(|| cfg.output_dir.clone());
            match expcli::run(&cfg, &out, jobs) {
                Ok(s) if s.failures == 0 => {
                    println!("{} records written to {}", s.records.len(), s.out_dir.display());
                    ExitCode::SUCCESS
                }
                Ok(s) => {
                    eprintln!("{} of {} records failed; see {}", s.failures, s.records.len(), s.out_dir.join("results.csv").display());
                    ExitCode::from(3)
                }
                Err(e @ Error::Config { .. }) => {
                    eprintln!("{e}");
                    ExitCode::from(2)
                }
                Err(e) => {
                    eprintln!("{e}");
                    ExitCode::FAILURE
                }
            }
        }
        Cmd::Validate { config } => match expcli::validate(&config) {
            Ok(issues) if issues.is_empty() => {
                println!("{}: ok", config.display());
                ExitCode::SUCCESS
            }
            Ok(issues) => {
                for i in issues {
                    eprintln!("{}: {i}", config.display());
                }
                ExitCode::from(2)
            }
            Err(e) => {
                eprintln!("{}: {e}", config.display());
                ExitCode::from(2)
            }
        },
        Cmd::Summarize { dir, out } => {
            let out = out.unwrap_or_else(|| if dir.is_dir() { dir.clone() } else { dir.parent().map(PathBuf::from).unwrap_or_default() });
            match expcli::summarize(&dir, &out) {
                Ok(rows) => {
                    println!("{} sweep points summarized into {}", rows.len(), out.join("summary.csv").display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("{e}");
                    ExitCode::FAILURE
                }
            }
        }
    }
}
