//! Batch driver: one structured-text configuration file per run, a handful
//! of overrides on the command line, deterministic artifacts in the output
//! directory. Exit codes: 0 success, 1 failed assertion or run error,
//! 2 configuration error.

mod config;
mod runner;

use clap::Parser;

use config::RunConfig;

#[derive(Parser)]
#[command(name = "memoir", version, about = "Batch experiments for stochastic nonlocal reaction-diffusion equations with fading memory")]
struct Cli {
    /// Path to the run configuration file.
    #[arg(long)]
    config: std::path::PathBuf,

    /// Override the configured output directory.
    #[arg(long)]
    out: Option<std::path::PathBuf>,

    /// Override the configured seed list (comma separated).
    #[arg(long)]
    seed_override: Option<String>,
}

fn main() {
    let cli = Cli::parse();
    let text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", cli.config.display());
            std::process::exit(2);
        }
    };
    let mut cfg = match RunConfig::parse(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("configuration error: {e}");
            std::process::exit(2);
        }
    };
    if let Some(out) = cli.out {
        cfg.out_dir = out;
    }
    if let Some(seeds) = cli.seed_override {
        match seeds
            .split(',')
            .map(|s| s.trim().parse::<u64>())
            .collect::<Result<Vec<_>, _>>()
        {
            Ok(s) if !s.is_empty() => cfg.seeds = s,
            _ => {
                eprintln!("configuration error: bad --seed-override '{seeds}'");
                std::process::exit(2);
            }
        }
    }
    if let Err(e) = cfg.validate() {
        eprintln!("configuration error: {e}");
        std::process::exit(2);
    }
    match runner::run(&cfg) {
        Ok(report) => std::process::exit(report.exit_code),
        Err(e) => {
            eprintln!("run error: {e}");
            std::process::exit(1);
        }
    }
}
